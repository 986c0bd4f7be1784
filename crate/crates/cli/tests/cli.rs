//! End-to-end checks of the command-line interface: every subcommand
//! runs against a small generated CSV and the documented exit codes
//! hold.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairsample"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("failed to launch binary")
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Two separable groups with unequal rates; enough rows for a few splits.
fn write_toy_csv(path: &Path, n: usize) {
    let mut body = String::from("age,score,city,group,label\n");
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..n {
        let g = if next() < 0.7 { "a" } else { "b" };
        let age = if g == "a" { 20.0 + 30.0 * next() } else { 45.0 + 30.0 * next() };
        let score = next();
        let city = if next() < 0.5 { "north" } else { "south" };
        let label = if next() < 0.4 { "yes" } else { "no" };
        body.push_str(&format!("{age:.2},{score:.4},{city},{g},{label}\n"));
    }
    fs::write(path, body).unwrap();
}

#[test]
fn train_sample_audit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    write_toy_csv(&data, 600);
    let model = dir.path().join("model");

    let out = run(&[
        "train",
        "--data", data.to_str().unwrap(),
        "--label-column", "label",
        "--positive-label", "yes",
        "--sensitive-column", "group",
        "--alpha", "1.0",
        "--t-cap", "30",
        "--min-leaf-mass", "20",
        "--out", model.to_str().unwrap(),
    ]);
    assert_success(&out, "train");
    for artifact in ["tree.json", "matrix.json", "trace.json", "encoder.json", "target.json"] {
        assert!(model.join(artifact).exists(), "missing {artifact}");
    }

    let out = run(&[
        "sample",
        "--model", model.to_str().unwrap(),
        "--data", data.to_str().unwrap(),
        "--mode", "relaxed",
    ]);
    assert_success(&out, "sample");
    let kept = fs::read_to_string(model.join("kept.csv")).unwrap();
    assert!(kept.lines().count() > 1, "no rows kept");
    assert!(model.join("plan.json").exists());

    let out = run(&[
        "audit",
        "--model", model.to_str().unwrap(),
        "--data", data.to_str().unwrap(),
        "--out", dir.path().join("report.json").to_str().unwrap(),
    ]);
    assert_success(&out, "audit");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["disclosivity"].is_number());
    assert!(report["imbalance"].is_number());
}

#[test]
fn sweep_runs_from_toml_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    fs::write(
        &config,
        r#"
variants = ["naive-tree"]
alpha_grid = [0.0]
eta_grid = [0.0, 1.0]
seeds = 1
subsample = 800
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("results");
    let out = run(&[
        "sweep",
        "--config", config.to_str().unwrap(),
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "sweep");
    for artifact in ["curves.csv", "aggregated.csv", "proportions.json", "timings.csv"] {
        assert!(out_dir.join(artifact).exists(), "missing {artifact}");
    }
}

#[test]
fn bounds_prints_report() {
    let out = run(&["bounds", "--dim", "5", "--groups", "2"]);
    assert_success(&out, "bounds");
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert!(report["round_bound"].as_u64().unwrap() > 0);
    assert!(report["min_leaf_size"].as_u64().unwrap() > 0);
}

#[test]
fn configuration_errors_exit_with_code_one() {
    // Unknown plan mode.
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sample",
        "--model", dir.path().to_str().unwrap(),
        "--data", "nonexistent.csv",
        "--mode", "bogus",
    ]);
    assert_eq!(out.status.code(), Some(1));

    // Missing input file.
    let out = run(&[
        "train",
        "--data", "nonexistent.csv",
        "--label-column", "label",
        "--positive-label", "yes",
        "--sensitive-column", "group",
        "--out", dir.path().join("m").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));

    // Bad flags.
    let out = run(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}
