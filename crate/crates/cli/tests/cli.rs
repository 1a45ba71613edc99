use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use safe_leveling::ExperimentConfig;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_safe-leveling")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, value: &serde_json::Value) -> PathBuf {
    let path = dir.join("cfg.json");
    fs::write(&path, value.to_string()).unwrap();
    path
}

fn small() -> serde_json::Value {
    let mut cfg = ExperimentConfig::desk();
    cfg.n_meal_events = 3;
    cfg.n_cycles = 2;
    cfg.problem.horizon = 6;
    cfg.sampler.optimism_samples = 50;
    serde_json::to_value(cfg).unwrap()
}

#[test]
fn validate_accepts_bundled_configs() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["desk.json", "tight.json"] {
        let out = bin(&["validate", "--config", root.join(name).to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{name}");
    }
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small();
    v["grid"]["step"] = 0.1.into();
    let path = write_config(dir.path(), &v);
    assert_eq!(bin(&["validate", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn missing_config_file_exits_2() {
    assert_eq!(bin(&["validate", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
}

#[test]
fn run_without_output_dir_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small());
    assert_eq!(bin(&["run", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn unknown_policy_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small());
    let out = dir.path().join("out");
    let code =
        bin(&["run", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--policies", "greedy"])
            .status
            .code();
    assert_eq!(code, Some(2));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small());
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let code = bin(&["run", "--config", path.to_str().unwrap(), "--out", blocker.to_str().unwrap()]).status.code();
    assert_eq!(code, Some(3));
}

#[test]
fn run_writes_reports_and_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small());
    let out = dir.path().join("out");
    let res = bin(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
        "--policies",
        "sale_lts,oracle",
        "--replications",
        "2",
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["provenance"]["master_seed"], 9);
    assert_eq!(summary["n_replications"], 2);
    assert_eq!(summary["policies"].as_array().unwrap().len(), 2);
    assert!(out.join("rounds.csv").exists() && out.join("regret_curve.csv").exists());
}

#[test]
fn bounds_prints_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small();
    v["sampler"]["p_override"] = 0.5.into();
    let path = write_config(dir.path(), &v);
    let out = bin(&["bounds", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["theorem1_value"].as_f64().unwrap() > 0.0);
    assert!(report["lemma1_tau_bound"].as_f64().unwrap() > 0.0);
}
