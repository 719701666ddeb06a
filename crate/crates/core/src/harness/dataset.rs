use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generation parameters of a clustered synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub num_classes: usize,
    pub per_class: usize,
    pub input_dim: usize,
    /// Class centers lie on the unit sphere of the first `signal_dim`
    /// coordinates; the noise is isotropic over all `input_dim` coordinates.
    pub signal_dim: usize,
    pub cluster_spread: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            num_classes: 16,
            per_class: 32,
            input_dim: 32,
            signal_dim: 8,
            cluster_spread: 0.2,
            seed: 0,
        }
    }
}

/// Points with integer class labels, stored class by class.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub points: Vec<Vec<f64>>,
    pub class_ids: Vec<usize>,
    pub params: SynthParams,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect()
}

impl SynthDataset {
    /// Samples class centers on the sphere and scatters `per_class` points
    /// around each with Gaussian noise scaled by `cluster_spread`.
    pub fn generate(params: &SynthParams) -> Result<Self> {
        if params.per_class < 2 {
            return Err(Error::InvalidInput(format!(
                "per_class must be >= 2, got {}",
                params.per_class
            )));
        }
        if params.num_classes == 0
            || params.input_dim == 0
            || params.signal_dim == 0
            || params.signal_dim > params.input_dim
        {
            return Err(Error::InvalidInput(format!(
                "need num_classes >= 1 and 1 <= signal_dim <= input_dim, got {params:?}"
            )));
        }
        if !(params.cluster_spread >= 0.0 && params.cluster_spread.is_finite()) {
            return Err(Error::InvalidInput(
                "cluster_spread must be finite and >= 0".into(),
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut points = Vec::with_capacity(params.num_classes * params.per_class);
        let mut class_ids = Vec::with_capacity(points.capacity());
        for class in 0..params.num_classes {
            let mut center = gaussian(&mut rng, params.signal_dim);
            let norm = center.iter().map(|v| v * v).sum::<f64>().sqrt();
            center.iter_mut().for_each(|v| *v /= norm);
            center.resize(params.input_dim, 0.0);
            for _ in 0..params.per_class {
                let noise = gaussian(&mut rng, params.input_dim);
                let point = center
                    .iter()
                    .zip(noise)
                    .map(|(c, e)| c + params.cluster_spread * e)
                    .collect();
                points.push(point);
                class_ids.push(class);
            }
        }
        Ok(SynthDataset {
            points,
            class_ids,
            params: params.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim
    }

    /// Splits every class into its first `train_per_class` members and the rest.
    pub fn split(&self, train_per_class: usize) -> Result<(SynthDataset, SynthDataset)> {
        let per = self.params.per_class;
        if train_per_class < 2 || per - train_per_class.min(per) < 2 {
            return Err(Error::InvalidInput(format!(
                "both splits need >= 2 items per class (per_class {per}, train {train_per_class})"
            )));
        }
        let mut train = SynthDataset {
            points: vec![],
            class_ids: vec![],
            params: self.params.clone(),
        };
        let mut eval = train.clone();
        train.params.per_class = train_per_class;
        eval.params.per_class = per - train_per_class;
        for (i, (p, &c)) in self.points.iter().zip(&self.class_ids).enumerate() {
            let target = if i % per < train_per_class {
                &mut train
            } else {
                &mut eval
            };
            target.points.push(p.clone());
            target.class_ids.push(c);
        }
        Ok((train, eval))
    }

    /// Indices of the members of each class.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.params.num_classes];
        for (i, &c) in self.class_ids.iter().enumerate() {
            members[c].push(i);
        }
        members
    }
}
