//! Randomized self-checks of the library against the brute-force oracles.

use anyhow::{bail, Result};
use blackbox_rank::oracle::{
    brute_average_precision, counting_rank, cumulative_sum, exhaustive_rank,
    finite_difference_check, series_recall_loss, weighted_tail_count,
};
use blackbox_rank::{
    ap_loss, outrun_counts, rank, rank_backward, rank_with_margin, recall_loss, Error, Lambda,
    Margin, WeightScheme,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const SUITES: [&str; 8] = [
    "prop1",
    "rank-count",
    "rearrangement",
    "tail-sum",
    "recall",
    "ap",
    "finite-diff",
    "margin",
];

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checked: usize,
    pub failed: usize,
    /// Largest observed error, where the suite compares floats.
    pub max_error: f64,
    /// First few failing instances.
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(suite: &str) -> Self {
        SuiteReport {
            suite: suite.to_string(),
            checked: 0,
            failed: 0,
            max_error: 0.0,
            failures: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failed == 0 && self.checked > 0
    }

    fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failed += 1;
            if self.failures.len() < 5 {
                self.failures.push(describe());
            }
        }
    }

    fn record_error(&mut self, err: f64, tol: f64, describe: impl FnOnce() -> String) {
        self.max_error = self.max_error.max(err);
        self.record(err <= tol, || {
            format!("error {err:e} > {tol:e}: {}", describe())
        });
    }
}

fn uniform_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Scores on a coarse grid so that ties are common.
fn tied_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(0..5) as f64 * 0.5)
        .collect()
}

fn labels_with_positive(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    let forced = rng.random_range(0..n);
    labels[forced] = true;
    labels
}

fn distinct(scores: &[f64]) -> bool {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).all(|w| w[0] != w[1])
}

/// Sorting ranks minimize `y · π` over all permutations, uniquely for distinct scores.
fn prop1(rng: &mut ChaCha8Rng, instances: usize) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("prop1");
    for _ in 0..instances {
        let n = rng.random_range(2..=7);
        let y = uniform_scores(rng, n);
        if !distinct(&y) {
            continue;
        }
        let sorted = rank(&y)?;
        let brute = exhaustive_rank(&y)?;
        rep.record(brute.ranking == sorted, || format!("{y:?}"));
    }
    Ok(rep)
}

/// Sorting ranks equal the counting definition, with and without ties.
fn rank_count(rng: &mut ChaCha8Rng, instances: usize) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("rank-count");
    for t in 0..instances {
        let n = rng.random_range(1..=200);
        let y = if t % 2 == 0 {
            uniform_scores(rng, n)
        } else {
            tied_scores(rng, n)
        };
        let r = rank(&y)?;
        rep.record(r.as_slice() == counting_rank(&y).as_slice(), || {
            format!("n={n}")
        });
    }
    Ok(rep)
}

/// `y · rank(y) ≤ y · π` for every shuffled permutation `π`.
fn rearrangement(rng: &mut ChaCha8Rng, instances: usize) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("rearrangement");
    for _ in 0..instances {
        let n = rng.random_range(2..=50);
        let y = uniform_scores(rng, n);
        let best = rank(&y)?.dot(&y);
        let mut perm: Vec<usize> = (1..=n).collect();
        perm.shuffle(rng);
        let other: f64 = perm.iter().zip(&y).map(|(&p, &v)| p as f64 * v).sum();
        rep.record(best <= other + 1e-12, || format!("{best} > {other}"));
    }
    Ok(rep)
}

/// `Σ_k w_k |{i : r_i ≥ k}| = Σ_i W(r_i)` for both weight schemes.
fn tail_sum(rng: &mut ChaCha8Rng, instances: usize) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("tail-sum");
    for _ in 0..instances {
        let len = rng.random_range(1..=20);
        let r: Vec<usize> = (0..len).map(|_| rng.random_range(0..=200)).collect();
        for scheme in [WeightScheme::Log, WeightScheme::LogLog] {
            let lhs = weighted_tail_count(scheme, &r);
            let rhs = cumulative_sum(scheme, &r);
            rep.record_error((lhs - rhs).abs(), 1e-9, || format!("{scheme} r={r:?}"));
        }
    }
    Ok(rep)
}

/// Closed-form recall loss against the truncated series, which is exact
/// once the series runs past the largest outrun count.
fn recall(rng: &mut ChaCha8Rng, instances: usize) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("recall");
    let lambda = Lambda::new(1.0)?;
    for t in 0..instances {
        let n = rng.random_range(1..=64);
        let y = if t % 3 == 0 {
            tied_scores(rng, n)
        } else {
            uniform_scores(rng, n)
        };
        let labels = labels_with_positive(rng, n);
        for scheme in [WeightScheme::Log, WeightScheme::LogLog] {
            let closed = recall_loss(&y, &labels, scheme, Margin::ZERO, lambda)?.value;
            let series = series_recall_loss(&y, &labels, scheme, n)?;
            rep.record_error((closed - series).abs(), 1e-9, || format!("{scheme} n={n}"));
        }
    }
    Ok(rep)
}

/// AP by sorting against AP by counting; ties are excluded because the
/// counting definition treats tied items as ranked jointly.
fn ap(rng: &mut ChaCha8Rng, instances: usize) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("ap");
    let lambda = Lambda::new(1.0)?;
    for _ in 0..instances {
        let n = rng.random_range(1..=64);
        let y = uniform_scores(rng, n);
        if !distinct(&y) {
            continue;
        }
        let labels = labels_with_positive(rng, n);
        let loss = ap_loss(&y, &labels, Margin::ZERO, lambda)?.value;
        let brute = 1.0 - brute_average_precision(&y, &labels)?;
        rep.record_error((loss - brute).abs(), 1e-12, || format!("n={n}"));
    }
    Ok(rep)
}

/// Blackbox gradient against central differences of the piecewise-linear
/// surrogate, at generic points only.
fn finite_diff(rng: &mut ChaCha8Rng, instances: usize) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("finite-diff");
    let mut attempts = 0;
    while rep.checked < instances && attempts < 20 * instances.max(1) {
        attempts += 1;
        let n = rng.random_range(2..=12);
        let lambda = Lambda::new(rng.random_range(0.1..2.0))?;
        let y = uniform_scores(rng, n);
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        match finite_difference_check(&y, &g, lambda, 1e-7) {
            Ok(err) => rep.record_error(err, 1e-6, || format!("n={n}")),
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e.into()),
        }
        // A gradient that leaves the ranking unchanged yields zero.
        let tiny: Vec<f64> = g.iter().map(|v| v * 1e-12).collect();
        let back = rank_backward(&y, &rank(&y)?, &tiny, lambda)?;
        rep.record(back.iter().all(|&v| v == 0.0), || format!("locality n={n}"));
    }
    Ok(rep)
}

/// With `α = 0` the margin-aware ranking and outrun counts match the plain ones.
fn margin(rng: &mut ChaCha8Rng, instances: usize) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("margin");
    for t in 0..instances {
        let n = rng.random_range(1..=64);
        let y = if t % 2 == 0 {
            uniform_scores(rng, n)
        } else {
            tied_scores(rng, n)
        };
        let labels = labels_with_positive(rng, n);
        let shifted = rank_with_margin(&y, &labels, Margin::ZERO)?;
        rep.record(shifted == rank(&y)?, || format!("rank n={n}"));
        let relevant: Vec<f64> = y
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l)
            .map(|(&v, _)| v)
            .collect();
        let plain = rank(&y)?;
        let within = rank(&relevant)?;
        let expected: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l)
            .zip(within.iter())
            .map(|((i, _), &w)| plain[i] - w)
            .collect();
        rep.record(
            outrun_counts(&y, &labels, Margin::ZERO)? == expected,
            || format!("outrun n={n}"),
        );
    }
    Ok(rep)
}

/// Runs the named suites (all when `names` is empty) with `instances`
/// random instances each. Suites draw from independent seeded streams.
pub fn run(names: &[String], instances: usize, seed: u64) -> Result<Vec<SuiteReport>> {
    for name in names {
        if !SUITES.contains(&name.as_str()) {
            bail!(
                "unknown suite `{name}` (expected one of {})",
                SUITES.join(", ")
            );
        }
    }
    let selected: Vec<(usize, &str)> = SUITES
        .iter()
        .enumerate()
        .filter(|(_, s)| names.is_empty() || names.iter().any(|n| n == *s))
        .map(|(i, &s)| (i, s))
        .collect();
    let mut reports = Vec::with_capacity(selected.len());
    for (stream, name) in selected {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        let report = match name {
            "prop1" => prop1(&mut rng, instances)?,
            "rank-count" => rank_count(&mut rng, instances)?,
            "rearrangement" => rearrangement(&mut rng, instances)?,
            "tail-sum" => tail_sum(&mut rng, instances)?,
            "recall" => recall(&mut rng, instances)?,
            "ap" => ap(&mut rng, instances)?,
            "finite-diff" => finite_diff(&mut rng, instances)?,
            "margin" => margin(&mut rng, instances)?,
            _ => unreachable!(),
        };
        reports.push(report);
    }
    Ok(reports)
}
