use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use blackbox_rank::harness::{
    self, AdamConfig, Init, LossKind, SynthDataset, SynthParams, TrainConfig,
};
use blackbox_rank::oracle::{batch_bias_experiment, synthetic_bias_dataset};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, BenchConfig};
use crate::config::{ConfigFile, Count};
use crate::landscape::{self, LandscapeConfig};
use crate::output::{sink, write_csv, write_json};
use crate::verify;

/// Bad flags, config files or parameter values. Maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| UsageError(format!("{e:#}")).into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

/// What a successful invocation found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    VerificationFailed,
}

/// Blackbox rank differentiation: verification, benchmarks and experiments.
#[derive(Debug, Parser)]
#[command(name = "bbrank", version)]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (a directory for `landscape`); stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// `key = value` file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the library against brute-force oracles on random instances.
    Verify(VerifyArgs),
    /// Time the AP loss forward and backward pass.
    Bench(BenchArgs),
    /// Sample the true and interpolated loss on a random 2-D slice.
    Landscape(LandscapeArgs),
    /// Expected mini-batch mAP against batch size.
    Bias(BiasArgs),
    /// Train a linear embedding on synthetic clusters.
    Train(TrainArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Suites to run (repeatable or comma-separated); all when absent.
    #[arg(long = "suite", value_delimiter = ',')]
    pub suites: Option<Vec<String>>,
    /// Random instances per suite.
    #[arg(long)]
    pub instances: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Input lengths, e.g. `1e5,1e6`.
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<Count>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub positive_fraction: Option<f64>,
    /// Margin of the timed runs; margin-0 runs are always added.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LandscapeArgs {
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Half-width of the sampled square.
    #[arg(long)]
    pub extent: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Mean score of class members; non-members have mean 0.
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub batch_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// recall-log, recall-loglog, ap or map-apc.
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Past batches kept in the score memory.
    #[arg(long)]
    pub memory: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub input_dim: Option<usize>,
    #[arg(long)]
    pub signal_dim: Option<usize>,
    #[arg(long)]
    pub spread: Option<f64>,
    /// Start from a rank-one near-tie initialization with this noise scale.
    #[arg(long)]
    pub near_tie: Option<f64>,
}

const GLOBAL_KEYS: [&str; 3] = ["seed", "out", "format"];

struct Globals {
    seed: u64,
    out: Option<PathBuf>,
    format: Format,
}

fn resolve_globals(cli: &Cli, file: &ConfigFile) -> Result<Globals> {
    Ok(Globals {
        seed: file.pick("seed", cli.seed, 0)?,
        out: cli
            .out
            .clone()
            .or_else(|| file.raw("out").map(PathBuf::from)),
        format: file.pick("format", cli.format, Format::Csv)?,
    })
}

fn allow(file: &ConfigFile, keys: &[&str]) -> Result<()> {
    let all: Vec<&str> = GLOBAL_KEYS.iter().chain(keys).copied().collect();
    file.check_keys(&all)
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<Outcome> {
    let file = match &cli.config {
        Some(path) => usage(ConfigFile::load(path))?,
        None => ConfigFile::default(),
    };
    let globals = usage(resolve_globals(&cli, &file))?;
    match &cli.command {
        Command::Verify(a) => verify_cmd(a, &file, &globals),
        Command::Bench(a) => bench_cmd(a, &file, &globals),
        Command::Landscape(a) => landscape_cmd(a, &file, &globals),
        Command::Bias(a) => bias_cmd(a, &file, &globals),
        Command::Train(a) => train_cmd(a, &file, &globals),
    }
}

fn verify_cmd(args: &VerifyArgs, file: &ConfigFile, g: &Globals) -> Result<Outcome> {
    let (suites, instances) = usage((|| {
        allow(file, &["suite", "instances"])?;
        let suites: Vec<String> = file.pick_list("suite", args.suites.clone(), Vec::new())?;
        let instances: usize = file.pick("instances", args.instances, 1000)?;
        anyhow::ensure!(instances > 0, "instances must be >= 1");
        for s in &suites {
            anyhow::ensure!(
                verify::SUITES.contains(&s.as_str()),
                "unknown suite `{s}` (expected one of {})",
                verify::SUITES.join(", ")
            );
        }
        Ok((suites, instances))
    })())?;

    let reports = verify::run(&suites, instances, g.seed)?;
    #[derive(serde::Serialize)]
    struct Row<'a> {
        suite: &'a str,
        checked: usize,
        failed: usize,
        max_error: f64,
        passed: bool,
    }
    let rows: Vec<Row> = reports
        .iter()
        .map(|r| Row {
            suite: &r.suite,
            checked: r.checked,
            failed: r.failed,
            max_error: r.max_error,
            passed: r.passed(),
        })
        .collect();
    let mut out = sink(g.out.as_deref())?;
    match g.format {
        Format::Csv => write_csv(&mut *out, &rows)?,
        Format::Json => write_json(&mut *out, &reports)?,
    }
    out.flush()?;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        eprintln!(
            "{status} {} ({} checked, {} failed)",
            r.suite, r.checked, r.failed
        );
        for f in &r.failures {
            eprintln!("    {f}");
        }
    }
    Ok(if reports.iter().all(|r| r.passed()) {
        Outcome::Success
    } else {
        Outcome::VerificationFailed
    })
}

fn bench_cmd(args: &BenchArgs, file: &ConfigFile, g: &Globals) -> Result<Outcome> {
    let config = usage((|| {
        allow(
            file,
            &["lengths", "repeats", "positive_fraction", "alpha", "lambda"],
        )?;
        let defaults = vec![
            Count(100_000),
            Count(1_000_000),
            Count(10_000_000),
            Count(100_000_000),
        ];
        let lengths = file.pick_list("lengths", args.lengths.clone(), defaults)?;
        let alpha: f64 = file.pick("alpha", args.alpha, 0.15)?;
        let alphas = if alpha == 0.0 {
            vec![0.0]
        } else {
            vec![alpha, 0.0]
        };
        Ok(BenchConfig {
            lengths: lengths.into_iter().map(|c| c.0).collect(),
            repeats: file.pick("repeats", args.repeats, 5)?,
            positive_fraction: file.pick("positive_fraction", args.positive_fraction, 0.01)?,
            alphas,
            lambda: file.pick("lambda", args.lambda, 0.5)?,
            seed: g.seed,
        })
    })())?;
    anyhow::ensure!(
        config.repeats > 0 && config.positive_fraction > 0.0 && config.positive_fraction <= 1.0,
        UsageError("repeats must be >= 1 and positive_fraction in (0, 1]".into())
    );

    let report = bench::run(&config, |row| {
        eprintln!(
            "length {:>11}  alpha {:<5}  median {:>10.2} ms",
            row.length, row.alpha, row.median_ms
        );
    })?;
    for length in &report.skipped {
        eprintln!("skipped length {length}: exceeds available memory");
    }
    let mut out = sink(g.out.as_deref())?;
    match g.format {
        Format::Csv => write_csv(&mut *out, &report.rows)?,
        Format::Json => write_json(&mut *out, &report)?,
    }
    out.flush()?;
    Ok(Outcome::Success)
}

fn landscape_file(dir: &Path, lambda: f64, format: Format) -> PathBuf {
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    dir.join(format!("landscape_lambda_{lambda}.{ext}"))
}

fn landscape_cmd(args: &LandscapeArgs, file: &ConfigFile, g: &Globals) -> Result<Outcome> {
    let config = usage((|| {
        allow(file, &["dims", "lambdas", "grid", "extent"])?;
        Ok(LandscapeConfig {
            dims: file.pick("dims", args.dims, 20)?,
            lambdas: file.pick_list("lambdas", args.lambdas.clone(), vec![0.2, 0.5, 1.0, 2.0])?,
            grid: file.pick("grid", args.grid, 50)?,
            extent: file.pick("extent", args.extent, 1.0)?,
            seed: g.seed,
        })
    })())?;
    let slices = usage(landscape::sample(&config))?;
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for slice in &slices {
        let path = landscape_file(&dir, slice.lambda, g.format);
        let mut out = sink(Some(&path))?;
        match g.format {
            Format::Csv => write_csv(&mut *out, &slice.rows)?,
            Format::Json => write_json(&mut *out, slice)?,
        }
        out.flush()?;
        eprintln!("wrote {}", path.display());
    }
    Ok(Outcome::Success)
}

fn bias_cmd(args: &BiasArgs, file: &ConfigFile, g: &Globals) -> Result<Outcome> {
    let (items, classes, separation, sizes, trials) = usage((|| {
        allow(
            file,
            &["items", "classes", "separation", "batch_sizes", "trials"],
        )?;
        let items: usize = file.pick("items", args.items, 1000)?;
        let classes: usize = file.pick("classes", args.classes, 10)?;
        let separation: f64 = file.pick("separation", args.separation, 1.0)?;
        let mut default_sizes: Vec<usize> = (1..)
            .map(|p| 1usize << p)
            .take_while(|&s| s < items)
            .collect();
        default_sizes.push(items);
        let sizes = file.pick_list("batch_sizes", args.batch_sizes.clone(), default_sizes)?;
        let trials: usize = file.pick("trials", args.trials, 200)?;
        anyhow::ensure!(items >= 1 && classes >= 1, "items and classes must be >= 1");
        anyhow::ensure!(separation.is_finite(), "separation must be finite");
        Ok((items, classes, separation, sizes, trials))
    })())?;

    let (scores, labels) = synthetic_bias_dataset(items, classes, separation, g.seed);
    let curve = usage(
        batch_bias_experiment(&scores, &labels, &sizes, trials, g.seed.wrapping_add(1))
            .map_err(Into::into),
    )?;
    let mut out = sink(g.out.as_deref())?;
    match g.format {
        Format::Csv => {
            writeln!(out, "# dataset_map={}", curve.dataset_map)?;
            #[derive(serde::Serialize)]
            struct Row {
                batch_size: usize,
                mean_map: f64,
                std_map: f64,
            }
            let rows: Vec<Row> = (0..curve.batch_sizes.len())
                .map(|i| Row {
                    batch_size: curve.batch_sizes[i],
                    mean_map: curve.mean_map[i],
                    std_map: curve.std_map[i],
                })
                .collect();
            write_csv(&mut *out, &rows)?;
        }
        Format::Json => write_json(&mut *out, &curve)?,
    }
    out.flush()?;
    Ok(Outcome::Success)
}

const TRAIN_KEYS: [&str; 17] = [
    "loss",
    "alpha",
    "lambda",
    "memory",
    "batch_size",
    "samples_per_class",
    "steps",
    "eval_every",
    "lr",
    "embed_dim",
    "train_per_class",
    "classes",
    "per_class",
    "input_dim",
    "signal_dim",
    "spread",
    "near_tie",
];

fn train_config(a: &TrainArgs, file: &ConfigFile, seed: u64) -> Result<(TrainConfig, SynthParams)> {
    allow(file, &TRAIN_KEYS)?;
    let d = TrainConfig::default();
    let p = SynthParams::default();
    let near_tie: Option<f64> = match a.near_tie {
        Some(v) => Some(v),
        None => file.get("near_tie")?,
    };
    let config = TrainConfig {
        loss: file.pick("loss", a.loss, d.loss)?,
        alpha: file.pick("alpha", a.alpha, d.alpha)?,
        lambda: file.pick("lambda", a.lambda, d.lambda)?,
        memory_batches: file.pick("memory", a.memory, d.memory_batches)?,
        batch_size: file.pick("batch_size", a.batch_size, d.batch_size)?,
        samples_per_class: file.pick(
            "samples_per_class",
            a.samples_per_class,
            d.samples_per_class,
        )?,
        steps: file.pick("steps", a.steps, d.steps)?,
        eval_every: file.pick("eval_every", a.eval_every, d.eval_every)?,
        embed_dim: file.pick("embed_dim", a.embed_dim, d.embed_dim)?,
        train_per_class: file.pick("train_per_class", a.train_per_class, d.train_per_class)?,
        init: near_tie.map_or(Init::Gaussian, |noise| Init::NearTie { noise }),
        optimizer: AdamConfig {
            learning_rate: file.pick("lr", a.lr, d.optimizer.learning_rate)?,
            ..d.optimizer
        },
        seed,
    };
    config.validate()?;
    let params = SynthParams {
        num_classes: file.pick("classes", a.classes, p.num_classes)?,
        per_class: file.pick("per_class", a.per_class, p.per_class)?,
        input_dim: file.pick("input_dim", a.input_dim, p.input_dim)?,
        signal_dim: file.pick("signal_dim", a.signal_dim, p.signal_dim)?,
        cluster_spread: file.pick("spread", a.spread, p.cluster_spread)?,
        seed,
    };
    Ok((config, params))
}

fn train_cmd(args: &TrainArgs, file: &ConfigFile, g: &Globals) -> Result<Outcome> {
    let (config, params) = usage(train_config(args, file, g.seed))?;
    let dataset = usage(SynthDataset::generate(&params).map_err(Into::into))?;
    let report = harness::train(&config, &dataset)?;

    let mut out = sink(g.out.as_deref())?;
    match g.format {
        Format::Csv => write_csv(&mut *out, &report.history)?,
        Format::Json => write_json(&mut *out, &report.history)?,
    }
    out.flush()?;
    for (label, row) in [("final", report.last()), ("best", report.best())] {
        eprintln!(
            "{label}: step {} loss {:.4} R@1 {:.4} R@4 {:.4} mAP {:.4}",
            row.step, row.loss, row.recall_at_1, row.recall_at_4, row.map
        );
    }
    Ok(Outcome::Success)
}
