use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{average_precision, recall_at_k};

use super::dataset::SynthDataset;
use super::model::{dot, EmbeddingModel};

/// Dataset-wide retrieval metrics with every item used once as the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `(K, R@K)` pairs in the order requested.
    pub recall: Vec<(usize, f64)>,
    pub map: f64,
    pub queries: usize,
    /// Queries excluded because they had no positive.
    pub skipped: usize,
}

impl Metrics {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.iter().find(|(kk, _)| *kk == k).map(|&(_, v)| v)
    }
}

/// R@K averaged over queries and mAP treating every query as a class column.
/// Ranking uses the raw similarities, never the training margin.
pub fn evaluate_embeddings(unit: &[Vec<f64>], classes: &[usize], ks: &[usize]) -> Result<Metrics> {
    if unit.len() < 2 {
        return Err(Error::InvalidInput(
            "evaluation needs at least 2 items".into(),
        ));
    }
    let per_query: Vec<Option<(Vec<bool>, f64)>> = (0..unit.len())
        .into_par_iter()
        .map(|q| -> Result<Option<(Vec<bool>, f64)>> {
            let (scores, labels): (Vec<f64>, Vec<bool>) = (0..unit.len())
                .filter(|&j| j != q)
                .map(|j| (dot(&unit[q], &unit[j]), classes[j] == classes[q]))
                .unzip();
            if !labels.contains(&true) {
                return Ok(None);
            }
            let hits = ks
                .iter()
                .map(|&k| recall_at_k(&scores, &labels, k))
                .collect::<Result<_>>()?;
            Ok(Some((hits, average_precision(&scores, &labels)?)))
        })
        .collect::<Result<_>>()?;

    let mut hits = vec![0usize; ks.len()];
    let mut ap_sum = 0.0;
    let mut queries = 0;
    for (h, ap) in per_query.iter().flatten() {
        queries += 1;
        ap_sum += ap;
        for (count, &hit) in hits.iter_mut().zip(h) {
            *count += hit as usize;
        }
    }
    if queries == 0 {
        return Err(Error::UndefinedMetric("no query has a positive".into()));
    }
    Ok(Metrics {
        recall: ks
            .iter()
            .zip(hits)
            .map(|(&k, c)| (k, c as f64 / queries as f64))
            .collect(),
        map: ap_sum / queries as f64,
        queries,
        skipped: unit.len() - queries,
    })
}

pub fn evaluate(model: &EmbeddingModel, dataset: &SynthDataset, ks: &[usize]) -> Result<Metrics> {
    let emb = model.forward(&dataset.points)?;
    evaluate_embeddings(&emb.unit, &dataset.class_ids, ks)
}
