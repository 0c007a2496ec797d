use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_rhpsvm");

const TOY: &str = "x1,x2,y\n1,1,1\n2,1.5,1\n1.5,2,1\n-1,-1,-1\n-2,-1.5,-1\n-1.5,-2,-1\n";

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn toy(dir: &Path) -> String {
    let p = dir.join("toy.csv");
    std::fs::write(&p, TOY).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["losscurve", "--loss", "rhp", "--tau", "1.5"]), 1);
    assert_eq!(code(&["losscurve", "--bogus"]), 1);
    assert_eq!(code(&["train", "--data", "/nonexistent/x.csv", "--loss", "rhp", "--out", "/tmp/never.json"]), 2);
}

#[test]
fn losscurve_rows() {
    let out = run(&["losscurve", "--loss", "rhp", "--umin", "-3", "--umax", "3", "--step", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "u,loss,deriv");
    assert_eq!(lines.len(), 8);
    let zero: Vec<f64> = lines[4].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(zero, vec![0.0, 0.0, 0.0]);
}

#[test]
fn train_predict_and_bound() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let model = dir.path().join("m.json");
    let model = model.to_str().unwrap();
    let metrics = dir.path().join("met.csv");

    let summary = json(&run(&["train", "--data", &data, "--loss", "rhp", "--kernel", "linear", "--out", model]));
    assert_eq!(summary["meta"]["command"], "train");

    let out = run(&["predict", "--model", model, "--data", &data, "--metrics", metrics.to_str().unwrap()]);
    assert!(out.status.success());
    let preds = String::from_utf8(out.stdout).unwrap();
    assert_eq!(preds.lines().count(), 7);
    let met = std::fs::read_to_string(&metrics).unwrap();
    let row: Vec<&str> = met.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "6");
    assert_eq!(row[1].parse::<f64>().unwrap(), 1.0);

    let b = json(&run(&["bound", "--model", model, "--data", &data]));
    let parts = ["empirical", "complexity", "confidence"].map(|k| b[k].as_f64().unwrap());
    let total = b["total"].as_f64().unwrap();
    assert!((parts.iter().sum::<f64>() - total).abs() <= 1e-12 * total.abs().max(1.0));
}

#[test]
fn config_file_merges_with_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"loss": "rhp", "eta": 2.0, "tau": 0.3, "kernel": "linear"}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let model = dir.path().join("m.json");
    let s = json(&run(&["train", "--data", &data, "--config", cfg, "--tau", "0.7", "--out", model.to_str().unwrap()]));
    let params = &s["meta"]["config"]["params"];
    assert_eq!(params["eta"].as_f64(), Some(2.0));
    assert_eq!(params["tau"].as_f64(), Some(0.7));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"etta": 2.0}"#).unwrap();
    assert_eq!(code(&["train", "--data", &data, "--loss", "rhp", "--config", bad.to_str().unwrap(), "--out", model.to_str().unwrap()]), 1);
}

#[test]
fn contradictory_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let out = dir.path().join("m.json");
    let out = out.to_str().unwrap();
    assert_eq!(code(&["train", "--data", &data, "--loss", "rhp", "--kernel", "linear", "--gamma", "2", "--out", out]), 1);
    assert_eq!(code(&["train", "--data", &data, "--loss", "rhp", "--kernel", "rbf", "--degree", "2", "--out", out]), 1);
}

#[test]
fn bench_noise_is_deterministic() {
    let args = ["bench", "noise", "--n", "60", "--rates", "0", "--repeats", "2", "--seed", "3"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(!v["rows"].as_array().unwrap().is_empty());
}

#[test]
fn libsvm_input_trains() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("toy.svm");
    std::fs::write(&p, "+1 1:1 2:1\n+1 1:2 2:1.5\n+1 1:1.5 2:2\n-1 1:-1 2:-1\n-1 1:-2 2:-1.5\n-1 1:-1.5 2:-2\n").unwrap();
    let model = dir.path().join("m.json");
    let s = json(&run(&[
        "train", "--data", p.to_str().unwrap(), "--format", "libsvm", "--loss", "hinge",
        "--kernel", "linear", "--out", model.to_str().unwrap(),
    ]));
    assert_eq!(s["train_metrics"]["accuracy"].as_f64(), Some(1.0));
}
