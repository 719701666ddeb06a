//! Wall-clock timing of the AP loss forward and backward pass.

use std::time::Instant;

use anyhow::Result;
use blackbox_rank::{ap_loss, Lambda, Margin};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Peak working set of one AP loss evaluation, per element, with headroom.
const BYTES_PER_ELEMENT: u64 = 96;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchRow {
    pub length: usize,
    pub median_ms: f64,
    pub p10_ms: f64,
    pub p90_ms: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Lengths not run because they would not fit in available memory.
    pub skipped: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub lengths: Vec<usize>,
    pub repeats: usize,
    pub positive_fraction: f64,
    pub alphas: Vec<f64>,
    pub lambda: f64,
    pub seed: u64,
}

/// `MemAvailable` from `/proc/meminfo`, if readable.
pub fn available_memory() -> Option<u64> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = info.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kib: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib * 1024)
}

pub fn fits_in_memory(length: usize, available: Option<u64>) -> bool {
    match available {
        Some(bytes) => (length as u64).saturating_mul(BYTES_PER_ELEMENT) <= bytes,
        None => true,
    }
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[idx.clamp(1, sorted.len()) - 1]
}

/// Uniform scores and a fixed share of positives (at least one).
pub fn bench_input(length: usize, positive_fraction: f64, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores: Vec<f64> = (0..length).map(|_| rng.random::<f64>()).collect();
    let positives = ((length as f64 * positive_fraction).round() as usize).clamp(1, length);
    let mut labels = vec![false; length];
    for i in index::sample(&mut rng, length, positives) {
        labels[i] = true;
    }
    (scores, labels)
}

/// Times `repeats` evaluations of the AP loss (value and gradient) per
/// length and margin, on the calling thread.
pub fn run(config: &BenchConfig, mut progress: impl FnMut(&BenchRow)) -> Result<BenchReport> {
    anyhow::ensure!(config.repeats > 0, "repeats must be >= 1");
    anyhow::ensure!(
        config.positive_fraction > 0.0 && config.positive_fraction <= 1.0,
        "positive fraction must be in (0, 1]"
    );
    let lambda = Lambda::new(config.lambda)?;
    let margins: Vec<Margin> = config
        .alphas
        .iter()
        .map(|&a| Margin::new(a))
        .collect::<Result<_, _>>()?;
    let available = available_memory();
    let mut report = BenchReport {
        rows: Vec::new(),
        skipped: Vec::new(),
    };

    for &length in &config.lengths {
        anyhow::ensure!(length > 0, "lengths must be positive");
        if !fits_in_memory(length, available) {
            report.skipped.push(length);
            continue;
        }
        let (scores, labels) = bench_input(length, config.positive_fraction, config.seed);
        for &margin in &margins {
            let mut times = Vec::with_capacity(config.repeats);
            for _ in 0..config.repeats {
                let start = Instant::now();
                let res = ap_loss(&scores, &labels, margin, lambda)?;
                times.push(start.elapsed().as_secs_f64() * 1e3);
                std::hint::black_box(res);
            }
            times.sort_by(f64::total_cmp);
            let row = BenchRow {
                length,
                median_ms: percentile(&times, 50.0),
                p10_ms: percentile(&times, 10.0),
                p90_ms: percentile(&times, 90.0),
                alpha: margin.alpha(),
            };
            progress(&row);
            report.rows.push(row);
        }
    }
    Ok(report)
}
