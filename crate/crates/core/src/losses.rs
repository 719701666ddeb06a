//! Rank-based retrieval metrics and their blackbox-differentiable losses.
//!
//! Metrics (`recall_at_k`, `average_precision`) always rank the raw scores.
//! Losses rank the margin-shifted scores and differentiate through the ranker
//! with [`rank_backward`]. Since the shift is constant per item the returned
//! gradient is also the gradient with respect to the raw scores.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rank::{rank, rank_backward, shift_scores, validate_scores, Lambda, Margin, Ranking};
use crate::weights::WeightScheme;

/// A loss value together with its gradient with respect to the input scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossResult {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn relevant_indices(labels: &[bool]) -> Result<Vec<usize>> {
    let rel: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l)
        .map(|(i, _)| i)
        .collect();
    if rel.is_empty() {
        return Err(Error::UndefinedMetric("no relevant items".into()));
    }
    Ok(rel)
}

/// Full ranking and the within-relevant ranking of one score vector.
struct RelevantRanks {
    scores: Vec<f64>,
    full: Ranking,
    relevant: Vec<usize>,
    relevant_scores: Vec<f64>,
    /// Rank of each relevant item among the relevant ones, aligned with `relevant`.
    within: Ranking,
}

impl RelevantRanks {
    fn new(scores: Vec<f64>, labels: &[bool]) -> Result<Self> {
        let relevant = relevant_indices(labels)?;
        let full = rank(&scores)?;
        let relevant_scores: Vec<f64> = relevant.iter().map(|&i| scores[i]).collect();
        let within = rank(&relevant_scores)?;
        Ok(RelevantRanks {
            scores,
            full,
            relevant,
            relevant_scores,
            within,
        })
    }

    fn shifted(scores: &[f64], labels: &[bool], margin: Margin) -> Result<Self> {
        validate_scores(scores)?;
        Self::new(shift_scores(scores, labels, margin)?, labels)
    }

    /// Number of irrelevant items ranked above each relevant item.
    fn outrun(&self) -> impl Iterator<Item = usize> + '_ {
        self.relevant
            .iter()
            .zip(self.within.iter())
            .map(|(&i, &w)| self.full[i] - w)
    }

    /// Chains `∂L/∂rank` and `∂L/∂rank⁺` (aligned with `relevant`) to score space.
    fn backward(
        &self,
        grad_full: &[f64],
        grad_within: Option<&[f64]>,
        lambda: Lambda,
    ) -> Result<Vec<f64>> {
        let mut grad = rank_backward(&self.scores, &self.full, grad_full, lambda)?;
        if let Some(gw) = grad_within {
            let sub = rank_backward(&self.relevant_scores, &self.within, gw, lambda)?;
            for (&i, d) in self.relevant.iter().zip(sub) {
                grad[i] += d;
            }
        }
        Ok(grad)
    }
}

/// 1 iff some relevant item is among the top `k` raw scores.
pub fn recall_at_k(scores: &[f64], labels: &[bool], k: usize) -> Result<bool> {
    check_len(scores.len(), labels.len())?;
    relevant_indices(labels)?;
    let ranks = rank(scores)?;
    Ok(ranks.iter().zip(labels).any(|(&r, &l)| l && r <= k))
}

/// For each relevant item (in index order), the number of irrelevant items
/// ranked above it after the margin shift.
pub fn outrun_counts(scores: &[f64], labels: &[bool], margin: Margin) -> Result<Vec<usize>> {
    Ok(RelevantRanks::shifted(scores, labels, margin)?
        .outrun()
        .collect())
}

/// Fraction of relevant items outrun by fewer than `k` irrelevant items.
pub fn refined_recall_at_k(
    scores: &[f64],
    labels: &[bool],
    k: usize,
    margin: Margin,
) -> Result<f64> {
    let r = outrun_counts(scores, labels, margin)?;
    Ok(r.iter().filter(|&&ri| ri < k).count() as f64 / r.len() as f64)
}

/// Configuration of the weighted recall loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallLoss {
    pub scheme: WeightScheme,
    pub margin: Margin,
    pub lambda: Lambda,
    /// Also differentiate the within-relevant ranking. Off by default: `r_i`
    /// only counts irrelevant outrunners, so the relative order of relevant
    /// items carries no signal.
    pub through_relevant_rank: bool,
}

impl RecallLoss {
    pub fn new(scheme: WeightScheme, margin: Margin, lambda: Lambda) -> Self {
        RecallLoss {
            scheme,
            margin,
            lambda,
            through_relevant_rank: false,
        }
    }

    /// Mean of `W(r_i)` over relevant items, with its blackbox gradient.
    /// The value lies in `[0, W(n - 1)]`, so it can exceed 1.
    pub fn evaluate(&self, scores: &[f64], labels: &[bool]) -> Result<LossResult> {
        let ranks = RelevantRanks::shifted(scores, labels, self.margin)?;
        let p = ranks.relevant.len() as f64;
        let outrun: Vec<f64> = ranks.outrun().map(|r| r as f64).collect();
        let value = outrun
            .iter()
            .map(|&r| self.scheme.cumulative_at(r))
            .sum::<f64>()
            / p;

        let slope: Vec<f64> = outrun
            .iter()
            .map(|&r| self.scheme.cumulative_derivative(r) / p)
            .collect();
        let mut grad_full = vec![0.0; scores.len()];
        for (&i, &s) in ranks.relevant.iter().zip(&slope) {
            grad_full[i] = s;
        }
        let grad_within: Option<Vec<f64>> = self
            .through_relevant_rank
            .then(|| slope.iter().map(|s| -s).collect());
        let grad = ranks.backward(&grad_full, grad_within.as_deref(), self.lambda)?;
        Ok(LossResult { value, grad })
    }
}

/// Weighted recall loss `Σ_K w_K (1 - refined_recall@K)` in closed form.
pub fn recall_loss(
    scores: &[f64],
    labels: &[bool],
    scheme: WeightScheme,
    margin: Margin,
    lambda: Lambda,
) -> Result<LossResult> {
    RecallLoss::new(scheme, margin, lambda).evaluate(scores, labels)
}

/// Average Precision of the raw scores.
///
/// Precision at a relevant item is its rank among relevant items divided by
/// its overall rank.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_len(scores.len(), labels.len())?;
    let ranks = RelevantRanks::shifted(scores, labels, Margin::ZERO)?;
    Ok(mean_precision(&ranks))
}

fn mean_precision(ranks: &RelevantRanks) -> f64 {
    let total: f64 = ranks
        .relevant
        .iter()
        .zip(ranks.within.iter())
        .map(|(&i, &w)| w as f64 / ranks.full[i] as f64)
        .sum();
    total / ranks.relevant.len() as f64
}

/// `1 - AP` of the margin-shifted scores, differentiated through both the
/// full ranking and the within-relevant ranking.
pub fn ap_loss(
    scores: &[f64],
    labels: &[bool],
    margin: Margin,
    lambda: Lambda,
) -> Result<LossResult> {
    let ranks = RelevantRanks::shifted(scores, labels, margin)?;
    let p = ranks.relevant.len() as f64;
    let value = 1.0 - mean_precision(&ranks);

    let mut grad_full = vec![0.0; scores.len()];
    let mut grad_within = Vec::with_capacity(ranks.relevant.len());
    for (&i, &w) in ranks.relevant.iter().zip(ranks.within.iter()) {
        let r = ranks.full[i] as f64;
        grad_full[i] = w as f64 / (p * r * r);
        grad_within.push(-1.0 / (p * r));
    }
    let grad = ranks.backward(&grad_full, Some(&grad_within), lambda)?;
    Ok(LossResult { value, grad })
}

/// Mean AP over class columns that contain a relevant item.
pub fn mean_average_precision(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<f64> {
    check_matrix(scores, labels)?;
    let mut total = 0.0;
    let mut included = 0usize;
    for (s, l) in scores.iter().zip(labels) {
        if l.contains(&true) {
            total += average_precision(s, l)?;
            included += 1;
        }
    }
    if included == 0 {
        return Err(Error::UndefinedMetric(
            "no class has a relevant item".into(),
        ));
    }
    Ok(total / included as f64)
}

fn check_matrix(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<usize> {
    check_len(scores.len(), labels.len())?;
    let Some(first) = scores.first() else {
        return Err(Error::InvalidInput("no class columns".into()));
    };
    for (s, l) in scores.iter().zip(labels) {
        check_len(first.len(), s.len())?;
        check_len(first.len(), l.len())?;
    }
    Ok(first.len())
}

/// Mean of the per-class AP losses over classes that have a relevant item.
///
/// Columns are classes; the gradient is laid out class-major and is zero on
/// skipped columns.
pub fn map_loss(
    scores: &[Vec<f64>],
    labels: &[Vec<bool>],
    margin: Margin,
    lambda: Lambda,
) -> Result<LossResult> {
    let n = check_matrix(scores, labels)?;
    let included: Vec<usize> = (0..scores.len())
        .filter(|&c| labels[c].contains(&true))
        .collect();
    if included.is_empty() {
        return Err(Error::UndefinedMetric(
            "no class has a relevant item".into(),
        ));
    }
    let scale = 1.0 / included.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; n * scores.len()];
    for &c in &included {
        let res = ap_loss(&scores[c], &labels[c], margin, lambda)?;
        value += res.value * scale;
        for (dst, g) in grad[c * n..(c + 1) * n].iter_mut().zip(res.grad) {
            *dst = g * scale;
        }
    }
    Ok(LossResult { value, grad })
}

/// AP loss of all class columns concatenated class-major into one vector.
pub fn apc_loss(
    scores: &[Vec<f64>],
    labels: &[Vec<bool>],
    margin: Margin,
    lambda: Lambda,
) -> Result<LossResult> {
    check_matrix(scores, labels)?;
    let flat_scores: Vec<f64> = scores.concat();
    let flat_labels: Vec<bool> = labels.concat();
    ap_loss(&flat_scores, &flat_labels, margin, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    const Y4: [f64; 4] = [0.9, 0.8, 0.7, 0.6];

    fn lam(v: f64) -> Lambda {
        Lambda::new(v).unwrap()
    }

    fn bools(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&b| b == 1).collect()
    }

    #[test]
    fn recall_at_k_examples() {
        let y = [0.9, 0.1, 0.8];
        let l = bools(&[0, 1, 0]);
        assert!(!recall_at_k(&y, &l, 2).unwrap());
        assert!(recall_at_k(&y, &l, 3).unwrap());
        assert!(recall_at_k(&[0.2, 0.5, 0.1], &[true; 3], 1).unwrap());
        assert!(matches!(
            recall_at_k(&y, &[false; 3], 1),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn refined_recall_examples() {
        let l = bools(&[0, 1, 0, 1]);
        assert_eq!(outrun_counts(&Y4, &l, Margin::ZERO).unwrap(), vec![1, 2]);
        assert_eq!(refined_recall_at_k(&Y4, &l, 2, Margin::ZERO).unwrap(), 0.5);
        assert_eq!(
            refined_recall_at_k(&Y4, &[true; 4], 1, Margin::ZERO).unwrap(),
            1.0
        );
        let top = bools(&[1, 1, 0, 0]);
        assert_eq!(
            refined_recall_at_k(&Y4, &top, 1, Margin::ZERO).unwrap(),
            1.0
        );
        assert!(refined_recall_at_k(&Y4, &[false; 4], 1, Margin::ZERO).is_err());
    }

    #[test]
    fn recall_loss_examples() {
        let l = bools(&[0, 1, 0, 1]);
        let res = recall_loss(&Y4, &l, WeightScheme::Log, Margin::ZERO, lam(1.0)).unwrap();
        assert!((res.value - (2f64.ln() + 3f64.ln()) / 2.0).abs() < 1e-12);
        assert!((res.value - 0.8959).abs() < 1e-4);
        assert_eq!(res.grad.len(), 4);

        // Relevant items on top: W(0) = 0. The analytic slope is W'(0)/|rel| = 0.5,
        // so λ = 0.1 moves scores by 0.05 < the 0.1 gap and the gradient vanishes.
        let top = bools(&[1, 1, 0, 0]);
        for scheme in [WeightScheme::Log, WeightScheme::LogLog] {
            let res = recall_loss(&Y4, &top, scheme, Margin::ZERO, lam(0.1)).unwrap();
            assert_eq!(res.value, 0.0);
            assert_eq!(res.grad, vec![0.0; 4]);
        }

        let single = recall_loss(&[0.3], &[true], WeightScheme::Log, Margin::ZERO, lam(1.0));
        assert_eq!(single.unwrap().value, 0.0);
    }

    #[test]
    fn recall_loss_gradient_pushes_outrun_positive_up() {
        let l = bools(&[0, 1, 0, 1]);
        for through in [false, true] {
            for scheme in [WeightScheme::Log, WeightScheme::LogLog] {
                let mut cfg = RecallLoss::new(scheme, Margin::ZERO, lam(10.0));
                cfg.through_relevant_rank = through;
                let res = cfg.evaluate(&Y4, &l).unwrap();
                assert!(res.grad[1] <= 0.0 && res.grad[3] <= 0.0, "{:?}", res.grad);
                assert!(res.grad[1] < 0.0 || res.grad[3] < 0.0);
            }
        }
    }

    #[test]
    fn average_precision_examples() {
        let l = bools(&[1, 0, 1, 0]);
        assert!((average_precision(&Y4, &l).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&Y4, &bools(&[1, 1, 0, 0])).unwrap(), 1.0);
        assert_eq!(average_precision(&Y4, &[true; 4]).unwrap(), 1.0);
        assert!(average_precision(&Y4, &[false; 4]).is_err());
        assert!(matches!(
            average_precision(&Y4, &[true; 3]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn ap_loss_examples() {
        let l = bools(&[1, 0, 1, 0]);
        let res = ap_loss(&Y4, &l, Margin::ZERO, lam(1.0)).unwrap();
        assert!((res.value - 1.0 / 6.0).abs() < 1e-15);
        let perfect = ap_loss(&Y4, &bools(&[1, 1, 0, 0]), Margin::ZERO, lam(1.0)).unwrap();
        assert_eq!(perfect.value, 0.0);
    }

    #[test]
    fn ap_loss_gradient_pushes_outrun_positive_up() {
        let l = bools(&[1, 0, 1, 0]);
        let res = ap_loss(&Y4, &l, Margin::ZERO, lam(100.0)).unwrap();
        assert!(res.grad[2] < 0.0, "{:?}", res.grad);
        assert!(res.grad[1] > 0.0, "{:?}", res.grad);
    }

    #[test]
    fn margin_enters_training_losses_only() {
        // Positive at 0.55 beats the negative at 0.5 by less than the margin.
        let y = [0.55, 0.5];
        let l = [true, false];
        assert_eq!(average_precision(&y, &l).unwrap(), 1.0);
        let m = Margin::new(0.2).unwrap();
        assert!((ap_loss(&y, &l, m, lam(1.0)).unwrap().value - 0.5).abs() < 1e-15);
        let rec = recall_loss(&y, &l, WeightScheme::Log, m, lam(1.0)).unwrap();
        assert!((rec.value - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn map_and_apc_reduce_to_ap_for_one_class() {
        let s = vec![Y4.to_vec()];
        let l = vec![bools(&[1, 0, 1, 0])];
        let single = ap_loss(&s[0], &l[0], Margin::ZERO, lam(2.0)).unwrap();
        assert_eq!(map_loss(&s, &l, Margin::ZERO, lam(2.0)).unwrap(), single);
        assert_eq!(apc_loss(&s, &l, Margin::ZERO, lam(2.0)).unwrap(), single);
    }

    #[test]
    fn map_of_identical_columns() {
        let s = vec![Y4.to_vec(), Y4.to_vec()];
        let l = vec![bools(&[1, 0, 1, 0]), bools(&[1, 0, 1, 0])];
        let res = map_loss(&s, &l, Margin::ZERO, lam(2.0)).unwrap();
        assert!((res.value - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(res.grad.len(), 8);
        assert_eq!(res.grad[..4], res.grad[4..]);
    }

    #[test]
    fn map_skips_classes_without_positives() {
        let s = vec![Y4.to_vec(), Y4.to_vec()];
        let l = vec![bools(&[1, 0, 1, 0]), vec![false; 4]];
        let res = map_loss(&s, &l, Margin::ZERO, lam(2.0)).unwrap();
        assert!((res.value - 1.0 / 6.0).abs() < 1e-15);
        assert!(res.grad[4..].iter().all(|&g| g == 0.0));

        let empty = vec![vec![false; 4], vec![false; 4]];
        assert!(matches!(
            map_loss(&s, &empty, Margin::ZERO, lam(1.0)),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(apc_loss(&s, &empty, Margin::ZERO, lam(1.0)).is_err());
    }

    #[test]
    fn apc_ignores_class_order() {
        let s = vec![vec![0.9, 0.2, 0.4], vec![0.8, 0.1, 0.35]];
        let l = vec![bools(&[1, 0, 0]), bools(&[0, 0, 1])];
        let fwd = apc_loss(&s, &l, Margin::ZERO, lam(1.0)).unwrap();
        let s_rev: Vec<_> = s.iter().rev().cloned().collect();
        let l_rev: Vec<_> = l.iter().rev().cloned().collect();
        let rev = apc_loss(&s_rev, &l_rev, Margin::ZERO, lam(1.0)).unwrap();
        assert!((fwd.value - rev.value).abs() < 1e-15);
    }
}
