use std::collections::HashSet;
use std::path::Path;
use std::process::{Command, Output};

fn bbrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbrank"))
        .args(args)
        .output()
        .expect("spawn bbrank")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}, stderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn csv_records(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn verify_passes_and_reports_every_suite() {
    let out = bbrank(&["verify", "--instances", "200"]);
    let (header, rows) = csv_records(&stdout(&out));
    assert_eq!(
        header,
        ["suite", "checked", "failed", "max_error", "passed"]
    );
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r[2] == "0" && r[4] == "true"));
}

#[test]
fn verify_suite_filter_and_json() {
    let out = bbrank(&[
        "verify",
        "--suite",
        "ap,tail-sum",
        "--instances",
        "50",
        "--format",
        "json",
    ]);
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let suites: Vec<&str> = value
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["suite"].as_str().unwrap())
        .collect();
    assert_eq!(suites, ["tail-sum", "ap"]);
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "stepz = 3\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    for args in [
        vec!["train", "--bogus"],
        vec!["--config", cfg, "train"],
        vec!["--config", "/nonexistent/run.conf", "bias"],
        vec!["train", "--lambda", "0"],
        vec!["train", "--loss", "ndcg"],
        vec!["verify", "--suite", "nope"],
        vec!["bias", "--batch-sizes", "0"],
        vec!["bench", "--repeats", "0", "--lengths", "10"],
        vec!["--format", "xml", "bias"],
    ] {
        let out = bbrank(&args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn bias_output_is_deterministic_per_seed() {
    let args = ["bias", "--items", "200", "--classes", "5", "--trials", "20"];
    let a = stdout(&bbrank(&args));
    let b = stdout(&bbrank(&args));
    assert_eq!(a, b);
    let mut reseeded = args.to_vec();
    reseeded.extend(["--seed", "9"]);
    assert_ne!(a, stdout(&bbrank(&reseeded)));

    assert!(a.starts_with("# dataset_map="));
    let (header, rows) = csv_records(&a);
    assert_eq!(header, ["batch_size", "mean_map", "std_map"]);
    let sizes: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(sizes, ["2", "4", "8", "16", "32", "64", "128", "200"]);
}

#[test]
fn bias_json_is_a_curve() {
    let out = bbrank(&[
        "--format", "json", "bias", "--items", "100", "--trials", "5",
    ]);
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let full = value["mean_map"]
        .as_array()
        .unwrap()
        .last()
        .unwrap()
        .as_f64()
        .unwrap();
    assert_eq!(full, value["dataset_map"].as_f64().unwrap());
}

#[test]
fn train_history_is_deterministic_and_config_driven() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.conf");
    std::fs::write(&cfg, "# short run\nsteps = 40\neval_every = 10\nseed = 5\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let a = stdout(&bbrank(&["--config", cfg, "train", "--steps", "20"]));
    let b = stdout(&bbrank(&["train", "--config", cfg, "--steps", "20"]));
    assert_eq!(a, b);
    let (header, rows) = csv_records(&a);
    assert_eq!(
        header,
        ["step", "loss", "recall_at_1", "recall_at_4", "map"]
    );
    let steps: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(steps, ["0", "10", "20"]);

    let out_file = dir.path().join("nested/history.json");
    let out = bbrank(&[
        "train",
        "--steps",
        "5",
        "--eval-every",
        "5",
        "--loss",
        "map-apc",
        "--format",
        "json",
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert!(stdout(&out).is_empty());
    let value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_file).unwrap()).unwrap();
    assert_eq!(value.as_array().unwrap().len(), 2);
}

#[test]
fn bench_writes_rows_for_both_margins() {
    let out = bbrank(&["bench", "--lengths", "1e3,2000", "--repeats", "2"]);
    let (header, rows) = csv_records(&stdout(&out));
    assert_eq!(header, ["length", "median_ms", "p10_ms", "p90_ms", "alpha"]);
    let keys: Vec<(&str, &str)> = rows
        .iter()
        .map(|r| (r[0].as_str(), r[4].as_str()))
        .collect();
    assert_eq!(
        keys,
        [
            ("1000", "0.15"),
            ("1000", "0.0"),
            ("2000", "0.15"),
            ("2000", "0.0")
        ]
    );
}

struct Slice {
    true_loss: Vec<f64>,
    surrogate: Vec<f64>,
}

fn read_slice(dir: &Path, lambda: &str) -> Slice {
    let text = std::fs::read_to_string(dir.join(format!("landscape_lambda_{lambda}.csv"))).unwrap();
    let (header, rows) = csv_records(&text);
    assert_eq!(header, ["u", "v", "true_loss", "surrogate_loss"]);
    Slice {
        true_loss: rows.iter().map(|r| r[2].parse().unwrap()).collect(),
        surrogate: rows.iter().map(|r| r[3].parse().unwrap()).collect(),
    }
}

fn distinct(values: &[f64]) -> usize {
    values
        .iter()
        .map(|v| (v * 1e9).round() as i64)
        .collect::<HashSet<_>>()
        .len()
}

#[test]
fn landscape_interpolation_tightens_as_lambda_shrinks() {
    let dir = tempfile::tempdir().unwrap();
    let lambdas = ["0.01", "0.2", "0.5", "1", "2"];
    let out = bbrank(&[
        "landscape",
        "--grid",
        "30",
        "--lambdas",
        &lambdas.join(","),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    stdout(&out);
    let slices: Vec<Slice> = lambdas.iter().map(|l| read_slice(dir.path(), l)).collect();

    let mean_gap: Vec<f64> = slices
        .iter()
        .map(|s| {
            let total: f64 = s
                .true_loss
                .iter()
                .zip(&s.surrogate)
                .map(|(a, b)| (a - b).abs())
                .sum();
            total / s.true_loss.len() as f64
        })
        .collect();
    for w in mean_gap.windows(2) {
        assert!(w[0] < w[1], "{mean_gap:?}");
    }
    // Small λ: the interpolation coincides with the true loss on most of the slice.
    let tight = &slices[0];
    let equal = tight
        .true_loss
        .iter()
        .zip(&tight.surrogate)
        .filter(|(a, b)| a == b)
        .count();
    assert!(
        equal * 2 >= tight.true_loss.len(),
        "{equal} of {}",
        tight.true_loss.len()
    );

    // The true loss is piecewise constant; larger λ removes more of its plateaus.
    let counts: Vec<usize> = slices.iter().map(|s| distinct(&s.surrogate)).collect();
    for w in counts.windows(2) {
        assert!(w[0] <= w[1], "{counts:?}");
    }
    assert!(counts[0] < *counts.last().unwrap(), "{counts:?}");
    assert!(distinct(&slices[0].true_loss) < counts[0]);
}
