use crate::error::{check_len, Error, Result};
use crate::memory::{mask_gradient, Extended, Fifo};

use super::model::{dot, EmbeddingModel, Embeddings};

/// Detached unit embedding kept in the score memory.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryItem {
    pub unit: Vec<f64>,
    pub class: usize,
}

/// One query's cosine similarities to the rest of the batch, then to memory.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryScores {
    pub query: usize,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    /// `true` on the leading positions that belong to the current batch.
    pub current_mask: Vec<bool>,
    /// Batch index behind each current-batch position.
    pub others: Vec<usize>,
}

impl QueryScores {
    pub fn has_positive(&self) -> bool {
        self.labels.contains(&true)
    }
}

/// Similarities of every batch element to every other element and to the
/// memory. The self-pair is left out.
pub fn batch_similarities(
    unit: &[Vec<f64>],
    classes: &[usize],
    memory: &Fifo<Vec<MemoryItem>>,
) -> Result<Vec<QueryScores>> {
    check_len(unit.len(), classes.len())?;
    if unit.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "batch of {} < 2 items",
            unit.len()
        )));
    }
    let mut out = Vec::with_capacity(unit.len());
    for (q, (uq, &cq)) in unit.iter().zip(classes).enumerate() {
        let others: Vec<usize> = (0..unit.len()).filter(|&j| j != q).collect();
        let scores: Vec<f64> = others.iter().map(|&j| dot(uq, &unit[j])).collect();
        let labels: Vec<bool> = others.iter().map(|&j| classes[j] == cq).collect();
        let mem: Vec<(Vec<f64>, Vec<bool>)> = memory
            .iter()
            .map(|batch| {
                (
                    batch.iter().map(|m| dot(uq, &m.unit)).collect(),
                    batch.iter().map(|m| m.class == cq).collect(),
                )
            })
            .collect();
        let ext = Extended::concat(
            &scores,
            &labels,
            mem.iter().map(|(s, l)| (s.as_slice(), l.as_slice())),
        )?;
        out.push(QueryScores {
            query: q,
            scores: ext.scores,
            labels: ext.labels,
            current_mask: ext.current_mask,
            others,
        });
    }
    Ok(out)
}

/// Embeds `inputs` and returns per-query similarity scores and labels.
pub fn similarity_scores(
    model: &EmbeddingModel,
    inputs: &[Vec<f64>],
    classes: &[usize],
    memory: &Fifo<Vec<MemoryItem>>,
) -> Result<(Embeddings, Vec<QueryScores>)> {
    let emb = model.forward(inputs)?;
    let queries = batch_similarities(&emb.unit, classes, memory)?;
    Ok((emb, queries))
}

/// Chains per-query score gradients back to the unit embeddings.
///
/// Memory positions are masked out first, so detached memory entries never
/// contribute to the update.
pub fn embedding_gradient(
    unit: &[Vec<f64>],
    queries: &[QueryScores],
    score_grads: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    check_len(queries.len(), score_grads.len())?;
    let dim = unit.first().map_or(0, Vec::len);
    let mut grad = vec![vec![0.0; dim]; unit.len()];
    for (qs, g) in queries.iter().zip(score_grads) {
        let current = mask_gradient(g, &qs.current_mask)?.current;
        let q = qs.query;
        for (&j, &gj) in qs.others.iter().zip(&current) {
            if gj == 0.0 {
                continue;
            }
            for d in 0..dim {
                grad[q][d] += gj * unit[j][d];
                grad[j][d] += gj * unit[q][d];
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, dim: usize) -> Vec<f64> {
        (0..dim).map(|d| if d == i { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn identical_embeddings_score_one() {
        let unit = vec![e(0, 3); 4];
        let qs = batch_similarities(&unit, &[0, 0, 1, 1], &Fifo::new(0)).unwrap();
        for q in &qs {
            assert_eq!(q.scores, vec![1.0; 3]);
        }
        assert_eq!(qs[0].labels, vec![true, false, false]);
    }

    #[test]
    fn orthogonal_embeddings_score_zero() {
        let unit = vec![e(0, 3), e(1, 3), e(2, 3)];
        let qs = batch_similarities(&unit, &[0, 1, 2], &Fifo::new(0)).unwrap();
        for q in &qs {
            assert_eq!(q.scores, vec![0.0; 2]);
            assert!(!q.has_positive());
        }
    }

    #[test]
    fn self_pair_excluded_and_memory_appended() {
        let mut memory = Fifo::new(2);
        memory.push(vec![
            MemoryItem {
                unit: e(1, 2),
                class: 0
            };
            3
        ]);
        memory.push(vec![
            MemoryItem {
                unit: e(0, 2),
                class: 1
            };
            2
        ]);
        let unit = vec![e(0, 2), e(1, 2), e(0, 2), e(1, 2)];
        let qs = batch_similarities(&unit, &[0, 1, 0, 1], &memory).unwrap();
        assert_eq!(qs[0].scores.len(), 4 - 1 + 5);
        assert_eq!(qs[0].current_mask, [vec![true; 3], vec![false; 5]].concat());
        assert_eq!(qs[0].others, vec![1, 2, 3]);
        // newest memory batch (class 1, along e0) comes first
        assert_eq!(&qs[0].scores[3..], &[1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(&qs[0].labels[3..], &[false, false, true, true, true]);
        assert!(batch_similarities(&unit[..1], &[0], &memory).is_err());
    }

    #[test]
    fn memory_positions_do_not_receive_gradient() {
        let mut memory = Fifo::new(1);
        memory.push(vec![MemoryItem {
            unit: e(1, 2),
            class: 0,
        }]);
        let unit = vec![e(0, 2), e(1, 2)];
        let qs = batch_similarities(&unit, &[0, 1], &memory).unwrap();
        let grads = vec![vec![0.0, 5.0], vec![0.0, 5.0]];
        let g = embedding_gradient(&unit, &qs, &grads).unwrap();
        assert_eq!(g, vec![vec![0.0; 2]; 2]);
    }
}
