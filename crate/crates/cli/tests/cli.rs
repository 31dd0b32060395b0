use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn noncomp(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noncomp"))
        .arg("--workspace")
        .arg(ws)
        .args(args)
        .env("RUST_BACKTRACE", "0")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stage(ws: &Path, args: &[&str]) -> Value {
    let out = noncomp(ws, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn missing_prerequisite_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = noncomp(dir.path(), &["eval", "run", "--model", "m=preds.tsv"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ratings.json"), "{err}");
    assert!(err.contains("noncomp ratings compute"), "{err}");

    let out = noncomp(dir.path(), &["study", "gen", "--phase", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("curated.json"));
}

#[test]
fn config_rejects_unknown_keys_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\nbogus = 2\n").unwrap();
    let out = noncomp(dir.path(), &["--config", cfg.to_str().unwrap(), "config"]);
    assert!(!out.status.success());

    let out = noncomp(dir.path(), &["--seed", "99", "config"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed = 99"));
}

#[test]
fn staged_synthetic_run() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    stage(ws, &["synth", "corpus"]);
    let v = stage(ws, &["corpus", "validate"]);
    assert_eq!(v["sentences_without_sidecar"], Value::Array(vec![]));
    stage(ws, &["select", "candidates"]);
    stage(ws, &["pools", "build"]);
    let export = stage(ws, &["pools", "export"]);
    assert!(export["rows"].as_u64().unwrap() > 0);
    stage(ws, &["synth", "curate"]);
    stage(ws, &["pools", "import"]);
    stage(ws, &["study", "gen", "--phase", "1"]);
    stage(ws, &["synth", "respond", "--phase", "1"]);
    let gate = stage(ws, &["study", "gate", "--phase", "1"]);
    assert_eq!(gate["failed"], 0);
    let filter = stage(ws, &["study", "filter"]);
    assert_eq!(filter["survivors"], 259);

    let gen = stage(ws, &["study", "gen", "--phase", "2"]);
    assert_eq!(gen["items"], 1813);
    let batches = fs::read(ws.join("study2.batches.json")).unwrap();
    stage(ws, &["study", "gen", "--phase", "2"]);
    assert_eq!(fs::read(ws.join("study2.batches.json")).unwrap(), batches, "rerun is byte-identical");

    stage(ws, &["synth", "respond", "--phase", "2", "--careless", "2", "--noise", "0.1"]);
    let gate = stage(ws, &["study", "gate", "--phase", "2"]);
    assert_eq!(gate["failed"], 2);
    let alpha = stage(ws, &["study", "alpha", "--phase", "2"]);
    assert!(alpha["alpha"].as_f64().unwrap() > 0.5);

    stage(ws, &["ratings", "compute"]);
    let csv = fs::read_to_string(ws.join("ratings.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 259);

    stage(ws, &["synth", "predict", "--model", "toy"]);
    let eval = stage(ws, &["eval", "run"]);
    assert_eq!(eval["models"][0]["model_name"], "toy");
    assert!(ws.join("eval.toy.json").is_file());

    let fig = ws.join("figurative.tsv");
    let analysis = stage(ws, &["analyze", "--figurative", fig.to_str().unwrap(), "--variant", "maxabs"]);
    assert!(analysis["groups"]["composition_type"].as_u64().unwrap() > 0);
    assert!(ws.join("analysis.figurative.csv").is_file());
}
