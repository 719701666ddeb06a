use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::mean_average_precision;

/// Expected mini-batch mAP against batch size, next to the dataset-wide mAP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCurve {
    pub batch_sizes: Vec<usize>,
    pub mean_map: Vec<f64>,
    pub std_map: Vec<f64>,
    pub dataset_map: f64,
}

impl BiasCurve {
    /// `mean_map - dataset_map` per batch size.
    pub fn gaps(&self) -> Vec<f64> {
        self.mean_map.iter().map(|m| m - self.dataset_map).collect()
    }
}

/// Class-column scores for `items` items spread round-robin over `classes`
/// classes. Members of a class score `N(separation, 1)`, others `N(0, 1)`.
pub fn synthetic_bias_dataset(
    items: usize,
    classes: usize,
    separation: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<Vec<bool>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = vec![Vec::with_capacity(items); classes];
    let mut labels = vec![Vec::with_capacity(items); classes];
    for i in 0..items {
        for c in 0..classes {
            let member = i % classes == c;
            let noise: f64 = StandardNormal.sample(&mut rng);
            scores[c].push(noise + if member { separation } else { 0.0 });
            labels[c].push(member);
        }
    }
    (scores, labels)
}

fn batch_map(scores: &[Vec<f64>], labels: &[Vec<bool>], picked: &[usize]) -> Result<f64> {
    let sub_scores: Vec<Vec<f64>> = scores
        .iter()
        .map(|col| picked.iter().map(|&i| col[i]).collect())
        .collect();
    let sub_labels: Vec<Vec<bool>> = labels
        .iter()
        .map(|col| picked.iter().map(|&i| col[i]).collect())
        .collect();
    mean_average_precision(&sub_scores, &sub_labels)
}

/// Mean and standard deviation of mAP over `trials` uniformly sampled
/// mini-batches per batch size. Classes without a positive in a batch are
/// skipped for that batch; batches without any positive are discarded.
///
/// Every (batch size, trial) pair draws from its own ChaCha stream, so the
/// result does not depend on how trials are scheduled across threads.
pub fn batch_bias_experiment(
    dataset_scores: &[Vec<f64>],
    dataset_labels: &[Vec<bool>],
    batch_sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<BiasCurve> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let dataset_map = mean_average_precision(dataset_scores, dataset_labels)?;
    let items = dataset_scores[0].len();

    let mut curve = BiasCurve {
        batch_sizes: batch_sizes.to_vec(),
        mean_map: Vec::with_capacity(batch_sizes.len()),
        std_map: Vec::with_capacity(batch_sizes.len()),
        dataset_map,
    };
    for (bi, &size) in batch_sizes.iter().enumerate() {
        if size == 0 || size > items {
            return Err(Error::InvalidInput(format!(
                "batch size {size} outside 1..={items}"
            )));
        }
        let samples: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((bi * trials + t) as u64);
                let mut picked = index::sample(&mut rng, items, size).into_vec();
                picked.sort_unstable();
                batch_map(dataset_scores, dataset_labels, &picked)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .filter_map(|r| match r {
                Ok(v) => Some(Ok(v)),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => Some(Err(e)),
            })
            .collect::<Result<_>>()?;
        if samples.is_empty() {
            return Err(Error::UndefinedMetric(format!(
                "no sampled batch of size {size} contained a positive"
            )));
        }
        // Offsetting by the first sample keeps identical samples exactly at their value.
        let anchor = samples[0];
        let mean = anchor + samples.iter().map(|v| v - anchor).sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / samples.len() as f64;
        curve.mean_map.push(mean);
        curve.std_map.push(var.sqrt());
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_batch_has_no_gap() {
        let (s, l) = synthetic_bias_dataset(60, 3, 1.0, 7);
        let curve = batch_bias_experiment(&s, &l, &[60], 5, 1).unwrap();
        assert_eq!(curve.mean_map[0], curve.dataset_map);
        assert_eq!(curve.std_map[0], 0.0);
    }

    #[test]
    fn singleton_batches_are_perfect() {
        let (s, l) = synthetic_bias_dataset(40, 4, 0.0, 3);
        let curve = batch_bias_experiment(&s, &l, &[1], 20, 2).unwrap();
        assert_eq!(curve.mean_map[0], 1.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let (s, l) = synthetic_bias_dataset(10, 2, 1.0, 0);
        assert!(batch_bias_experiment(&s, &l, &[11], 2, 0).is_err());
        assert!(batch_bias_experiment(&s, &l, &[0], 2, 0).is_err());
        assert!(batch_bias_experiment(&s, &l, &[5], 0, 0).is_err());
    }

    #[test]
    fn seeded_runs_repeat() {
        let (s, l) = synthetic_bias_dataset(100, 5, 1.0, 11);
        let a = batch_bias_experiment(&s, &l, &[4, 16], 50, 9).unwrap();
        let b = batch_bias_experiment(&s, &l, &[4, 16], 50, 9).unwrap();
        assert_eq!(a, b);
    }
}
