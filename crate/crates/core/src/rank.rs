//! The ranking operator and its blackbox backward pass.
//!
//! Ranking is the piecewise-constant map sending a score vector to the 1-based
//! descending position of each entry. It is the minimizer of the linear
//! objective `y · π` over all permutations `π`, so it can be treated as a
//! combinatorial solver: the backward pass perturbs the scores by the incoming
//! gradient, calls the ranker a second time and returns the scaled difference
//! of the two rankings.
//!
//! Ties are broken by index: among equal scores, the lower index receives the
//! better (smaller) rank.

use std::cmp::Ordering;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Margin width `α ≥ 0`.
///
/// During training relevant scores are shifted down by `α/2` and irrelevant
/// scores up by `α/2` before ranking.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Margin(f64);

impl Margin {
    pub const ZERO: Margin = Margin(0.0);

    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha >= 0.0 {
            Ok(Margin(alpha))
        } else {
            Err(Error::InvalidInput(format!(
                "margin must be finite and >= 0, got {alpha}"
            )))
        }
    }

    pub fn alpha(self) -> f64 {
        self.0
    }
}

impl Default for Margin {
    fn default() -> Self {
        Margin::ZERO
    }
}

/// Interpolation strength `λ > 0` of the blackbox backward pass.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Lambda(f64);

impl Lambda {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Lambda(lambda))
        } else {
            Err(Error::InvalidInput(format!(
                "lambda must be finite and > 0, got {lambda}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// 1-based descending ranks, a permutation of `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ranking(Vec<usize>);

impl Ranking {
    /// Wraps a rank vector after checking it is a permutation of `1..=n`.
    pub fn from_ranks(ranks: Vec<usize>) -> Result<Self> {
        let n = ranks.len();
        let mut seen = vec![false; n];
        for &r in &ranks {
            if r == 0 || r > n || seen[r - 1] {
                return Err(Error::InvalidInput(format!(
                    "{ranks:?} is not a permutation of 1..={n}"
                )));
            }
            seen[r - 1] = true;
        }
        Ok(Ranking(ranks))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    /// `y · π`, the objective minimized by the ranking of `y`.
    pub fn dot(&self, values: &[f64]) -> f64 {
        self.0.iter().zip(values).map(|(&r, &v)| r as f64 * v).sum()
    }
}

impl Deref for Ranking {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// Checks the score-vector invariants: nonempty and every entry finite.
pub fn validate_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("score vector is empty".into()));
    }
    if let Some((i, v)) = scores.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite(format!("score {i} is {v}")));
    }
    Ok(())
}

/// Indices of `scores` in descending order, ties by ascending index.
///
/// Scores must be finite; callers validate first.
pub(crate) fn descending_order(scores: &[f64]) -> Vec<usize> {
    // Sorting (value, index) pairs keeps the comparator on contiguous memory,
    // which matters at 10^7 elements.
    let mut keyed: Vec<(f64, usize)> = scores
        .iter()
        // `+ 0.0` folds -0.0 into 0.0 so they compare as a tie.
        .map(|&v| v + 0.0)
        .zip(0..)
        .collect();
    keyed.sort_unstable_by(|a, b| match b.0.total_cmp(&a.0) {
        Ordering::Equal => a.1.cmp(&b.1),
        other => other,
    });
    keyed.into_iter().map(|(_, i)| i).collect()
}

fn ranks_from_order(order: &[usize]) -> Vec<usize> {
    let mut ranks = vec![0; order.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// Ranks `scores` in descending order in O(n log n).
pub fn rank(scores: &[f64]) -> Result<Ranking> {
    validate_scores(scores)?;
    Ok(Ranking(ranks_from_order(&descending_order(scores))))
}

/// Applies the training margin: `y - α/2` for relevant items, `y + α/2` otherwise.
pub fn shift_scores(scores: &[f64], labels: &[bool], margin: Margin) -> Result<Vec<f64>> {
    check_len(scores.len(), labels.len())?;
    let half = margin.alpha() / 2.0;
    Ok(scores
        .iter()
        .zip(labels)
        .map(|(&y, &rel)| if rel { y - half } else { y + half })
        .collect())
}

/// Ranks the margin-shifted scores.
pub fn rank_with_margin(scores: &[f64], labels: &[bool], margin: Margin) -> Result<Ranking> {
    validate_scores(scores)?;
    rank(&shift_scores(scores, labels, margin)?)
}

/// Blackbox backward pass through the ranker.
///
/// `ranking` must be the forward-pass ranking of `scores`. Returns
/// `-(rank(y) - rank(y + λ·g)) / λ`, whose entries are integer multiples of `1/λ`.
pub fn rank_backward(
    scores: &[f64],
    ranking: &Ranking,
    grad_wrt_rank: &[f64],
    lambda: Lambda,
) -> Result<Vec<f64>> {
    validate_scores(scores)?;
    check_len(scores.len(), ranking.len())?;
    check_len(scores.len(), grad_wrt_rank.len())?;
    let lam = lambda.value();
    let perturbed = perturb(scores, grad_wrt_rank, lam)?;
    let perturbed_rank = rank(&perturbed)?;
    Ok(ranking
        .iter()
        .zip(perturbed_rank.iter())
        .map(|(&r, &rp)| (rp as f64 - r as f64) / lam)
        .collect())
}

fn perturb(scores: &[f64], grad: &[f64], lam: f64) -> Result<Vec<f64>> {
    let out: Vec<f64> = scores
        .iter()
        .zip(grad)
        .map(|(&y, &g)| y + lam * g)
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("perturbed scores y + λ·g".into()));
    }
    Ok(out)
}

/// Forward/backward pair that saves the forward inputs, mirroring how the
/// operator sits inside an autodiff graph.
#[derive(Debug, Clone)]
pub struct BlackboxRanker {
    scores: Vec<f64>,
    ranking: Ranking,
    lambda: Lambda,
}

impl BlackboxRanker {
    pub fn forward(scores: &[f64], lambda: Lambda) -> Result<Self> {
        let ranking = rank(scores)?;
        Ok(BlackboxRanker {
            scores: scores.to_vec(),
            ranking,
            lambda,
        })
    }

    pub fn ranking(&self) -> &Ranking {
        &self.ranking
    }

    pub fn backward(&self, grad_wrt_rank: &[f64]) -> Result<Vec<f64>> {
        rank_backward(&self.scores, &self.ranking, grad_wrt_rank, self.lambda)
    }
}

/// Piecewise-affine interpolation `f_λ` of the linear rank loss `g · rank(y)`.
///
/// `f_λ(y) = g·rank(y_λ) + (y·rank(y_λ) - y·rank(y)) / λ` with `y_λ = y + λg`.
/// It equals `g · rank(y)` wherever the perturbation leaves the ranking
/// unchanged, and on the interior of each region where both rankings are
/// constant its gradient is exactly [`rank_backward`].
pub fn surrogate_value(scores: &[f64], g: &[f64], lambda: Lambda) -> Result<f64> {
    validate_scores(scores)?;
    check_len(scores.len(), g.len())?;
    let lam = lambda.value();
    let base = rank(scores)?;
    let perturbed = rank(&perturb(scores, g, lam)?)?;
    let loss: f64 = perturbed.dot(g);
    // y · (rank(y_λ) - rank(y)) summed directly keeps cancellation small.
    let shift: f64 = scores
        .iter()
        .zip(perturbed.iter().zip(base.iter()))
        .map(|(&y, (&rp, &r))| y * (rp as f64 - r as f64))
        .sum();
    Ok(loss + shift / lam)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lam(v: f64) -> Lambda {
        Lambda::new(v).unwrap()
    }

    #[test]
    fn ranks_small_vectors() {
        assert_eq!(rank(&[0.5, 2.0, 1.0]).unwrap().as_slice(), &[3, 1, 2]);
        assert_eq!(rank(&[7.0]).unwrap().as_slice(), &[1]);
        assert_eq!(rank(&[1.0, 1.0]).unwrap().as_slice(), &[1, 2]);
        assert_eq!(rank(&[0.0, -0.0, 1.0]).unwrap().as_slice(), &[2, 3, 1]);
    }

    #[test]
    fn rejects_bad_scores() {
        assert!(matches!(rank(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert!(matches!(rank(&[f64::INFINITY]), Err(Error::NonFinite(_))));
        assert!(matches!(rank(&[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn margin_shift_examples() {
        let m = Margin::new(0.2).unwrap();
        assert_eq!(
            rank_with_margin(&[0.55, 0.5], &[true, false], m)
                .unwrap()
                .as_slice(),
            &[2, 1]
        );
        assert_eq!(
            rank_with_margin(&[0.55, 0.5], &[true, false], Margin::ZERO)
                .unwrap()
                .as_slice(),
            &[1, 2]
        );
        for alpha in [0.0, 0.3, 5.0] {
            let m = Margin::new(alpha).unwrap();
            let r = rank_with_margin(&[3.0, 2.0, 1.0], &[true; 3], m).unwrap();
            assert_eq!(r.as_slice(), &[1, 2, 3]);
        }
        assert!(matches!(
            rank_with_margin(&[1.0, 2.0], &[true], m),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(Margin::new(-0.1).is_err());
    }

    #[test]
    fn backward_examples() {
        let y = [1.0, 2.0];
        let r = rank(&y).unwrap();
        assert_eq!(
            rank_backward(&y, &r, &[1.0, -1.0], lam(1.0)).unwrap(),
            vec![-1.0, 1.0]
        );
        assert_eq!(
            rank_backward(&y, &r, &[1.0, -1.0], lam(0.1)).unwrap(),
            vec![0.0, 0.0]
        );

        let y = [0.3, 0.2, 0.1];
        let r = rank(&y).unwrap();
        for l in [0.01, 1.0, 100.0] {
            assert_eq!(
                rank_backward(&y, &r, &[0.0; 3], lam(l)).unwrap(),
                vec![0.0; 3]
            );
        }
    }

    #[test]
    fn backward_errors() {
        let y = [1.0, 2.0];
        let r = rank(&y).unwrap();
        assert!(matches!(
            rank_backward(&y, &r, &[1.0], lam(1.0)),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(Lambda::new(0.0).is_err());
        assert!(Lambda::new(-1.0).is_err());
        assert!(Lambda::new(f64::NAN).is_err());
    }

    #[test]
    fn backward_entries_are_multiples_of_inverse_lambda() {
        let y = [0.9, 0.1, 0.5, 0.45, 0.2];
        let g = [0.3, -0.2, 0.7, 0.1, -0.9];
        let r = rank(&y).unwrap();
        let l = 0.37;
        for d in rank_backward(&y, &r, &g, lam(l)).unwrap() {
            let k = d * l;
            assert!((k - k.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn blackbox_ranker_matches_free_functions() {
        let y = [1.0, 2.0];
        let op = BlackboxRanker::forward(&y, lam(1.0)).unwrap();
        assert_eq!(op.ranking().as_slice(), &[2, 1]);
        assert_eq!(op.backward(&[1.0, -1.0]).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn surrogate_examples() {
        assert_eq!(
            surrogate_value(&[1.0, 2.0], &[0.0, 0.0], lam(3.0)).unwrap(),
            0.0
        );
        assert_eq!(
            surrogate_value(&[1.0, 2.0], &[1.0, -1.0], lam(0.1)).unwrap(),
            1.0
        );
    }

    #[test]
    fn from_ranks_validates_permutation() {
        assert!(Ranking::from_ranks(vec![2, 1, 3]).is_ok());
        assert!(Ranking::from_ranks(vec![1, 1]).is_err());
        assert!(Ranking::from_ranks(vec![0, 1]).is_err());
        assert!(Ranking::from_ranks(vec![1, 3]).is_err());
    }
}
