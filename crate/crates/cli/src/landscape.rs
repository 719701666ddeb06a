//! Two-dimensional slices of the true linear rank loss and its
//! piecewise-linear interpolation.

use anyhow::Result;
use blackbox_rank::{rank, surrogate_value, Lambda};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct LandscapeRow {
    pub u: f64,
    pub v: f64,
    pub true_loss: f64,
    pub surrogate_loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Landscape {
    pub lambda: f64,
    pub rows: Vec<LandscapeRow>,
}

#[derive(Debug, Clone)]
pub struct LandscapeConfig {
    pub dims: usize,
    pub lambdas: Vec<f64>,
    pub grid: usize,
    /// Half-width of the `(u, v)` square.
    pub extent: f64,
    pub seed: u64,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// `L(y) = g · rank(y)` and its interpolation `f_λ` on the plane
/// `y0 + u d1 + v d2`, for seeded Gaussian `y0`, `g` and unit directions.
pub fn sample(config: &LandscapeConfig) -> Result<Vec<Landscape>> {
    anyhow::ensure!(config.dims >= 2, "dims must be >= 2");
    anyhow::ensure!(config.grid >= 2, "grid must be >= 2");
    anyhow::ensure!(
        config.extent > 0.0 && config.extent.is_finite(),
        "extent must be positive"
    );
    let lambdas: Vec<Lambda> = config
        .lambdas
        .iter()
        .map(|&l| Lambda::new(l))
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let y0 = gaussian(&mut rng, config.dims);
    let g = gaussian(&mut rng, config.dims);
    let d1 = unit(gaussian(&mut rng, config.dims));
    let d2 = unit(gaussian(&mut rng, config.dims));

    let step = 2.0 * config.extent / (config.grid - 1) as f64;
    let coords: Vec<f64> = (0..config.grid)
        .map(|i| -config.extent + i as f64 * step)
        .collect();
    let points: Vec<(f64, f64, Vec<f64>)> = coords
        .iter()
        .flat_map(|&u| coords.iter().map(move |&v| (u, v)))
        .map(|(u, v)| {
            let y = (0..config.dims)
                .map(|k| y0[k] + u * d1[k] + v * d2[k])
                .collect();
            (u, v, y)
        })
        .collect();
    let true_losses: Vec<f64> = points
        .iter()
        .map(|(_, _, y)| Ok(rank(y)?.dot(&g)))
        .collect::<Result<_>>()?;

    lambdas
        .iter()
        .map(|&lambda| {
            let rows = points
                .iter()
                .zip(&true_losses)
                .map(|((u, v, y), &true_loss)| {
                    Ok(LandscapeRow {
                        u: *u,
                        v: *v,
                        true_loss,
                        surrogate_loss: surrogate_value(y, &g, lambda)?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Landscape {
                lambda: lambda.value(),
                rows,
            })
        })
        .collect()
}
