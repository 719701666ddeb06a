use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Linear map `z = Wᵀx` followed by projection onto the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    input_dim: usize,
    embed_dim: usize,
    /// Row-major `input_dim × embed_dim`.
    weights: Vec<f64>,
}

/// Forward-pass cache: unnormalized norms and unit embeddings.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub norms: Vec<f64>,
    pub unit: Vec<Vec<f64>>,
}

impl EmbeddingModel {
    pub fn from_weights(input_dim: usize, embed_dim: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != input_dim * embed_dim || input_dim == 0 || embed_dim == 0 {
            return Err(Error::InvalidInput(format!(
                "{} weights for a {input_dim} x {embed_dim} model",
                weights.len()
            )));
        }
        Ok(EmbeddingModel {
            input_dim,
            embed_dim,
            weights,
        })
    }

    /// Gaussian initialization with variance `1 / input_dim`.
    pub fn random(input_dim: usize, embed_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (input_dim as f64).sqrt();
        let weights = (0..input_dim * embed_dim)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                scale * v
            })
            .collect();
        Self::from_weights(input_dim, embed_dim, weights)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.embed_dim];
        for (row, &xa) in self.weights.chunks_exact(self.embed_dim).zip(x) {
            for (zb, &w) in z.iter_mut().zip(row) {
                *zb += xa * w;
            }
        }
        z
    }

    /// Unit-norm embedding of every input. A zero projection is an error.
    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<Embeddings> {
        let mut norms = Vec::with_capacity(inputs.len());
        let mut unit = Vec::with_capacity(inputs.len());
        for x in inputs {
            if x.len() != self.input_dim {
                return Err(Error::LengthMismatch {
                    expected: self.input_dim,
                    actual: x.len(),
                });
            }
            let mut z = self.project(x);
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::NonFinite(format!("embedding norm {norm}")));
            }
            z.iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
            unit.push(z);
        }
        Ok(Embeddings { norms, unit })
    }

    /// Gradient with respect to the weights given `∂L/∂u` for each unit embedding.
    ///
    /// For `u = z/|z|`, `∂L/∂z = (I - u uᵀ) ∂L/∂u / |z|`, and `∂L/∂W = Σ x (∂L/∂z)ᵀ`.
    pub fn backward(
        &self,
        inputs: &[Vec<f64>],
        cache: &Embeddings,
        grad_unit: &[Vec<f64>],
    ) -> Vec<f64> {
        let mut grad = vec![0.0; self.weights.len()];
        for ((x, (u, &norm)), gu) in inputs
            .iter()
            .zip(cache.unit.iter().zip(&cache.norms))
            .zip(grad_unit)
        {
            let radial: f64 = u.iter().zip(gu).map(|(a, b)| a * b).sum();
            let gz: Vec<f64> = gu
                .iter()
                .zip(u)
                .map(|(g, ub)| (g - radial * ub) / norm)
                .collect();
            for (row, &xa) in grad.chunks_exact_mut(self.embed_dim).zip(x) {
                if xa == 0.0 {
                    continue;
                }
                for (dst, &g) in row.iter_mut().zip(&gz) {
                    *dst += xa * g;
                }
            }
        }
        grad
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeddings_are_unit_norm() {
        let model = EmbeddingModel::random(6, 3, 1).unwrap();
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..6).map(|a| (i * a) as f64 - 2.5).collect())
            .collect();
        let emb = model.forward(&xs).unwrap();
        for u in &emb.unit {
            assert!((dot(u, u).sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_zero_projection() {
        let model = EmbeddingModel::from_weights(2, 1, vec![0.0, 0.0]).unwrap();
        assert!(model.forward(&[vec![1.0, 1.0]]).is_err());
        assert!(EmbeddingModel::from_weights(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        // L = Σ_i c_i · u_i for fixed vectors c_i.
        let model = EmbeddingModel::random(4, 3, 2).unwrap();
        let xs = vec![vec![0.3, -1.0, 0.5, 2.0], vec![1.0, 0.1, -0.4, 0.0]];
        let cs = vec![vec![0.2, -0.7, 1.1], vec![-0.5, 0.3, 0.9]];
        let loss = |m: &EmbeddingModel| -> f64 {
            let e = m.forward(&xs).unwrap();
            e.unit.iter().zip(&cs).map(|(u, c)| dot(u, c)).sum()
        };
        let emb = model.forward(&xs).unwrap();
        let analytic = model.backward(&xs, &emb, &cs);
        let h = 1e-6;
        for (k, &expected) in analytic.iter().enumerate() {
            let mut up = model.clone();
            up.weights_mut()[k] += h;
            let mut down = model.clone();
            down.weights_mut()[k] -= h;
            let fd = (loss(&up) - loss(&down)) / (2.0 * h);
            assert!(
                (fd - expected).abs() < 1e-7,
                "weight {k}: {fd} vs {expected}"
            );
        }
    }
}
