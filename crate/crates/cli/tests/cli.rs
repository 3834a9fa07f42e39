use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fracball_cli::commands::properties;
use fracball_cli::config::ExperimentConfig;
use serde_json::Value;

fn fracball(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracball")).args(args).output().expect("binary runs")
}

fn with_config(dir: &Path, name: &str, json: &str, args: &[&str]) -> Output {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    let mut all: Vec<&str> = args.to_vec();
    all.push("--config");
    all.push(path.to_str().unwrap());
    fracball(&all)
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn kernel_eval_reports_versioned_json() {
    let out = fracball(&["kernel-eval"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["command"], "kernel-eval");
    assert_eq!(v["passed"], true);
    assert!(v["green"].as_f64().unwrap() > 0.0);
}

#[test]
fn csv_output_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("run");
    let out = fracball(&["kernel-eval", "--format", "csv", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("quantity,value\n"), "{text}");
    assert_eq!(fs::read_to_string(target.join("kernel_eval.csv")).unwrap(), text);
}

#[test]
fn usage_and_config_errors_exit_two() {
    assert_eq!(fracball(&[]).status.code(), Some(2));
    assert_eq!(fracball(&["kernel-eval", "--refine", "0"]).status.code(), Some(2));
    assert_eq!(fracball(&["kernel-eval", "--config", "/nonexistent/config.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = with_config(dir.path(), "c.json", r#"{"params":{"n":2},"extra":true}"#, &["kernel-eval"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));
}

#[test]
fn malformed_expression_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out");
    let out = with_config(dir.path(), "bad.json", r#"{"fields":{"f":"1 + * x1"}}"#, &["solve", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("offset 4"));
    assert!(!target.exists());
}

#[test]
fn injected_fault_fails_properties() {
    let dir = tempfile::tempdir().unwrap();
    let json = r#"{"properties":{"fault":{"constant":"poisson","scale":1.1}}}"#;
    let out = with_config(dir.path(), "fault.json", json, &["properties"]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    let failed: Vec<&Value> = v["properties"].as_array().unwrap().iter().filter(|p| p["passed"] == false).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|p| p["name"].as_str().unwrap().starts_with("poisson-normalization")));
    assert!(failed.iter().all(|p| p["counterexample"].is_object()));
}

#[test]
fn property_outcomes_do_not_depend_on_the_seed() {
    let base = ExperimentConfig::default();
    for seed in 0..10 {
        let out = properties::run(&base.clone().with_seed(seed)).unwrap();
        assert!(out.passed, "seed {seed}: {}", out.body);
    }
}

#[test]
fn solve_with_zero_forcing() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("zero");
    let out = with_config(dir.path(), "zero.json", r#"{"fields":{"f":"0"}}"#, &["solve", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["min_value"], 0.0);
    let solution: Value = serde_json::from_str(&fs::read_to_string(target.join("solution.json")).unwrap()).unwrap();
    assert!(solution["values"].as_array().unwrap().iter().all(|u| u == 0.0));
    assert!(target.join("solve.json").exists());
}

#[test]
fn trace_of_singular_solution_is_positive() {
    let dir = tempfile::tempdir().unwrap();
    let json = r#"{"trace":{"subject":"nontrivial","expect":"positive"}}"#;
    let out = with_config(dir.path(), "t.json", json, &["trace"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["trace"]["classification"], "positive");
}

#[test]
fn negative_control_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let json = r#"{"verify":{"subject":"green-potential"},"fields":{"f":"inside(exp(-4*|x|^2))"}}"#;
    let out = with_config(dir.path(), "neg.json", json, &["verify-nonuniqueness"]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["trace"]["classification"], "zero");
    assert_eq!(v["classification_ok"], false);
}
