//! Independent reference implementations.
//!
//! Nothing in here calls the sort-based ranker except where a check compares
//! against it: ranks are obtained by enumeration or by direct counting, and
//! the recall loss is summed as an explicit series over cut-offs.

mod bias;

pub use bias::{batch_bias_experiment, synthetic_bias_dataset, BiasCurve};

use itertools::Itertools;

use crate::error::{check_len, Error, Result};
use crate::rank::{rank, rank_backward, surrogate_value, validate_scores, Lambda, Ranking};
use crate::weights::WeightScheme;

/// Largest input accepted by [`exhaustive_rank`] (8! = 40320 permutations).
pub const EXHAUSTIVE_MAX: usize = 8;

/// Minimizer of `y · π` over all permutations, with its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveRank {
    pub ranking: Ranking,
    pub objective: f64,
}

fn ensure_distinct(scores: &[f64]) -> Result<()> {
    for (i, a) in scores.iter().enumerate() {
        if scores[i + 1..].iter().any(|b| a == b) {
            return Err(Error::Degenerate(format!("tied score {a}")));
        }
    }
    Ok(())
}

/// Ranking by enumerating all `n!` permutations and taking the unique
/// minimizer of `y · π`.
pub fn exhaustive_rank(scores: &[f64]) -> Result<ExhaustiveRank> {
    validate_scores(scores)?;
    let n = scores.len();
    if n > EXHAUSTIVE_MAX {
        return Err(Error::TooLarge {
            size: n,
            max: EXHAUSTIVE_MAX,
        });
    }
    ensure_distinct(scores)?;

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut best_count = 0;
    for perm in (1..=n).permutations(n) {
        let objective: f64 = perm.iter().zip(scores).map(|(&p, &y)| p as f64 * y).sum();
        match &best {
            Some((b, _)) if objective > *b => {}
            Some((b, _)) if objective == *b => best_count += 1,
            _ => {
                best = Some((objective, perm));
                best_count = 1;
            }
        }
    }
    let (objective, ranks) = best.expect("n >= 1 has at least one permutation");
    if best_count != 1 {
        return Err(Error::Degenerate(format!(
            "{best_count} permutations attain the minimum"
        )));
    }
    Ok(ExhaustiveRank {
        ranking: Ranking::from_ranks(ranks)?,
        objective,
    })
}

/// `1 + #{j : y_j > y_i} + #{j < i : y_j = y_i}` by O(n²) counting.
pub fn counting_rank(scores: &[f64]) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            1 + scores
                .iter()
                .enumerate()
                .filter(|&(j, &yj)| yj > yi || (yj == yi && j < i))
                .count()
        })
        .collect()
}

/// Irrelevant items strictly outranking each relevant item, by direct counting
/// under the lower-index-first tie rule.
pub fn counting_outrun(scores: &[f64], labels: &[bool]) -> Vec<usize> {
    (0..scores.len())
        .filter(|&i| labels[i])
        .map(|i| {
            (0..scores.len())
                .filter(|&j| {
                    !labels[j] && (scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                })
                .count()
        })
        .collect()
}

/// `Σ_{K=1}^{k_max} w_K (1 - refined_recall@K)` summed term by term.
pub fn series_recall_loss(
    scores: &[f64],
    labels: &[bool],
    scheme: WeightScheme,
    k_max: usize,
) -> Result<f64> {
    validate_scores(scores)?;
    check_len(scores.len(), labels.len())?;
    let r = counting_outrun(scores, labels);
    if r.is_empty() {
        return Err(Error::UndefinedMetric("no relevant items".into()));
    }
    let p = r.len() as f64;
    Ok((1..=k_max)
        .map(|k| {
            let refined = r.iter().filter(|&&ri| ri < k).count() as f64 / p;
            scheme.weight(k) * (1.0 - refined)
        })
        .sum())
}

/// Left side of the summation-by-parts identity: `Σ_k w_k |{i : r_i ≥ k}|`.
pub fn weighted_tail_count(scheme: WeightScheme, r: &[usize]) -> f64 {
    let k_max = r.iter().copied().max().unwrap_or(0);
    (1..=k_max)
        .map(|k| scheme.weight(k) * r.iter().filter(|&&ri| ri >= k).count() as f64)
        .sum()
}

/// Right side: `Σ_i W(r_i)` with the closed-form cumulative weight.
pub fn cumulative_sum(scheme: WeightScheme, r: &[usize]) -> f64 {
    r.iter().map(|&ri| scheme.cumulative(ri)).sum()
}

/// Average Precision by counting: for each relevant item, the fraction of
/// items scoring at least as high that are relevant.
pub fn brute_average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    validate_scores(scores)?;
    check_len(scores.len(), labels.len())?;
    let mut total = 0.0;
    let mut relevant = 0usize;
    for (i, &yi) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        relevant += 1;
        let above = scores.iter().filter(|&&yj| yj >= yi).count();
        let rel_above = scores
            .iter()
            .zip(labels)
            .filter(|&(&yj, &l)| l && yj >= yi)
            .count();
        total += rel_above as f64 / above as f64;
    }
    if relevant == 0 {
        return Err(Error::UndefinedMetric("no relevant items".into()));
    }
    Ok(total / relevant as f64)
}

fn min_gap(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Largest discrepancy between central differences of [`surrogate_value`]
/// and the output of [`rank_backward`].
///
/// The point must be interior to a region where both `rank(y)` and
/// `rank(y + λg)` are constant under `±step` moves of each coordinate.
pub fn finite_difference_check(
    scores: &[f64],
    grad_wrt_rank: &[f64],
    lambda: Lambda,
    step: f64,
) -> Result<f64> {
    validate_scores(scores)?;
    check_len(scores.len(), grad_wrt_rank.len())?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "step must be positive, got {step}"
        )));
    }
    let perturbed: Vec<f64> = scores
        .iter()
        .zip(grad_wrt_rank)
        .map(|(&y, &g)| y + lambda.value() * g)
        .collect();
    if min_gap(scores) <= 2.0 * step || min_gap(&perturbed) <= 2.0 * step {
        return Err(Error::Degenerate(format!(
            "pairwise gap below 2 x step ({step})"
        )));
    }

    let analytic = rank_backward(scores, &rank(scores)?, grad_wrt_rank, lambda)?;
    let mut probe = scores.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..scores.len() {
        probe[i] = scores[i] + step;
        let up = surrogate_value(&probe, grad_wrt_rank, lambda)?;
        probe[i] = scores[i] - step;
        let down = surrogate_value(&probe, grad_wrt_rank, lambda)?;
        probe[i] = scores[i];
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max((numeric - analytic[i]).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustive_examples() {
        let ex = exhaustive_rank(&[0.5, 2.0, 1.0]).unwrap();
        assert_eq!(ex.ranking.as_slice(), &[3, 1, 2]);
        assert_eq!(ex.objective, 5.5);
        assert_eq!(exhaustive_rank(&[1.0]).unwrap().ranking.as_slice(), &[1]);
    }

    #[test]
    fn exhaustive_errors() {
        let big: Vec<f64> = (0..9).map(f64::from).collect();
        assert!(matches!(exhaustive_rank(&big), Err(Error::TooLarge { .. })));
        assert!(matches!(
            exhaustive_rank(&[1.0, 2.0, 1.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn counting_rank_follows_tie_rule() {
        assert_eq!(counting_rank(&[0.5, 2.0, 1.0]), vec![3, 1, 2]);
        assert_eq!(counting_rank(&[1.0, 1.0]), vec![1, 2]);
    }

    #[test]
    fn series_examples() {
        let y = [0.9, 0.8, 0.7, 0.6];
        let l = [false, true, false, true];
        let s = series_recall_loss(&y, &l, WeightScheme::Log, 5).unwrap();
        assert!((s - (2f64.ln() + 3f64.ln()) / 2.0).abs() < 1e-12);
        assert_eq!(
            series_recall_loss(&y, &[true; 4], WeightScheme::LogLog, 5).unwrap(),
            0.0
        );
        assert!(series_recall_loss(&y, &[false; 4], WeightScheme::Log, 5).is_err());
    }

    #[test]
    fn tail_count_identity_small() {
        let r = [0, 3, 1, 3, 7];
        for scheme in [WeightScheme::Log, WeightScheme::LogLog] {
            let lhs = weighted_tail_count(scheme, &r);
            assert!((lhs - cumulative_sum(scheme, &r)).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_ap_examples() {
        let y = [0.9, 0.8, 0.7, 0.6];
        let ap = brute_average_precision(&y, &[true, false, true, false]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(
            brute_average_precision(&y, &[true, true, false, false]).unwrap(),
            1.0
        );
        assert_eq!(brute_average_precision(&y, &[true; 4]).unwrap(), 1.0);
        assert!(brute_average_precision(&y, &[false; 4]).is_err());
    }

    #[test]
    fn finite_difference_examples() {
        let lam = Lambda::new(1.0).unwrap();
        // n = 2 flip: y_λ = [2, 1] reverses the order.
        let err = finite_difference_check(&[1.0, 2.0], &[1.0, -1.0], lam, 1e-4).unwrap();
        assert!(err < 1e-8);
        let zero = finite_difference_check(&[0.1, 0.7, 0.4], &[0.0; 3], lam, 1e-4).unwrap();
        assert_eq!(zero, 0.0);
        assert!(matches!(
            finite_difference_check(&[0.1, 0.10001], &[0.0; 2], lam, 1e-4),
            Err(Error::Degenerate(_))
        ));
        // y_λ = [1.5, 1.5] is a tie.
        assert!(matches!(
            finite_difference_check(&[1.0, 2.0], &[0.5, -0.5], lam, 1e-4),
            Err(Error::Degenerate(_))
        ));
    }
}
