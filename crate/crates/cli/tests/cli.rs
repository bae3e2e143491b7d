use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{
  "experiments": [
    {"kind": "priming", "variation": "question", "lengths": [4], "spacings": [5], "catch_trials": 10},
    {"kind": "distance", "set": "3-animals"},
    {"kind": "anchoring", "experiment": 1, "min_length": 40, "max_length": 44, "per_cell": 4}
  ],
  "mock": {"base": 0.8, "shift": 0.03, "noise": 0.05, "anchor_bias": 2.0, "estimate_noise": 2.0, "seed": 3},
  "seed": 99
}"#;

fn cogfx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogfx")).args(args).env("RUST_LOG", "error").output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn only_run_dir(out: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

fn run_record(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("run.json")).unwrap()).unwrap()
}

#[test]
fn plan_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiments": [{"kind": "anchoring", "experiment": 1}], "seed": 1}"#);
    let o = cogfx(&["plan", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().any(|l| l.starts_with("anchoring-1") && l.contains(" 840 ")), "{}", stdout(&o));

    let o = cogfx(&["plan", "--config", cfg.to_str().unwrap(), "--json"]);
    let plan: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(plan["total_instances"], 840);

    let cfg = write_config(dir.path(), r#"{"experiments": []}"#);
    let plan: Value = serde_json::from_slice(&cogfx(&["plan", "--config", cfg.to_str().unwrap(), "--json"]).stdout).unwrap();
    assert_eq!(plan["total_instances"], 0);
}

#[test]
fn plan_matches_dispatch_and_rerun_is_cached() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let plan: Value =
        serde_json::from_slice(&cogfx(&["plan", "--config", cfg.to_str().unwrap(), "--json"]).stdout).unwrap();

    let o = cogfx(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run_dir = only_run_dir(&out);
    let record = run_record(&run_dir);
    for e in plan["experiments"].as_array().unwrap() {
        let id = e["experiment_id"].as_str().unwrap();
        assert_eq!(record["dispatched"][id], e["instances"], "{id}");
    }
    assert_eq!(record["backend_calls"], plan["total_instances"]);
    for f in ["report.txt", "report.csv", "report.json", "observations.jsonl", "observations.csv", "config.json"] {
        assert!(run_dir.join(f).is_file(), "{f}");
    }

    let report = std::fs::read(run_dir.join("report.txt")).unwrap();
    let o = cogfx(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(run_record(&run_dir)["backend_calls"], 0);
    assert_eq!(std::fs::read(run_dir.join("report.txt")).unwrap(), report);

    // analyze and report rebuild the same artifacts from disk
    assert!(cogfx(&["analyze", run_dir.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read(run_dir.join("report.txt")).unwrap(), report);
    let o = cogfx(&["report", run_dir.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).as_bytes(), report.as_slice());
}

#[test]
fn interrupted_run_resumes_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = cogfx(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--stop-after", "100"]);
    assert_eq!(o.status.code(), Some(130));
    let cache = out.join("cache.jsonl");
    assert_eq!(std::fs::read_to_string(&cache).unwrap().lines().count(), 100);

    let o = cogfx(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let record = run_record(&only_run_dir(&out));
    let total = std::fs::read_to_string(&cache).unwrap().lines().count();
    assert_eq!(record["backend_calls"].as_u64().unwrap() as usize, total - 100);
    assert_eq!(record["cache_hits"], 100);
}

#[test]
fn seed_and_backend_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiments": [{"kind": "anchoring", "experiment": 1}]}"#);
    let o = cogfx(&["plan", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = cogfx(&["plan", "--config", cfg.to_str().unwrap(), "--seed", "4"]);
    assert!(o.status.success());
}

#[test]
fn missing_api_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"experiments": [{"kind": "distance", "set": "3-animals"}],
            "backend": {"endpoint_url": "http://127.0.0.1:9/v1/completions", "model_name": "m",
                        "api_key_env_name": "COGFX_TEST_KEY_THAT_IS_NOT_SET"}}"#,
    );
    let o = cogfx(&["run", "--config", cfg.to_str().unwrap(), "--backend", "live", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("COGFX_TEST_KEY_THAT_IS_NOT_SET"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiments": [], "sead": 3}"#);
    assert_eq!(cogfx(&["plan", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn analyze_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = cogfx(&["analyze", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(cogfx(&["report", dir.path().to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn mock_validate_reports_rates() {
    let dir = tempfile::tempdir().unwrap();
    let opts = dir.path().join("sweep.json");
    std::fs::write(
        &opts,
        r#"{"deltas": [0.0, 0.1], "seeds": 10, "noise": 0.05, "base": 0.8, "variation": "sentence",
            "lengths": [4], "spacings": [5], "targets_per_length": 100}"#,
    )
    .unwrap();
    let o = cogfx(&["mock-validate", "--config", opts.to_str().unwrap(), "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rates: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rates.as_array().unwrap().len(), 2);
    assert_eq!(rates[1]["rate_001"], 1.0);
}
