use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SIMPLE: &str = r#"{"shift": 0.0, "span": 1.0, "atoms": [[-1, 0.5], [1, 0.5]]}"#;

fn fluctlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluctlab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("error object on stderr")
}

#[test]
fn run_writes_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{{"experiment": "identity-suite", "step": {SIMPLE}, "n_list": [2, 4, 6]}}"#));
    let out_dir = dir.path().join("out");

    let v = fluctlab(&["validate", "--config", &cfg]);
    assert_eq!(v.status.code(), Some(0));
    let status: Value = serde_json::from_slice(&v.stdout).unwrap();
    assert_eq!(status["experiment"], "identity-suite");

    let r = fluctlab(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(out_dir.join("identity_suite.csv")).unwrap();
    assert!(csv.starts_with("n,duality_dp,duality_oracle,alili_doney,mixture\n"));
    assert_eq!(csv.lines().count(), 4);

    let manifest: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "identity-suite");
    assert_eq!(manifest["threads"], 2);
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["file"].as_str().unwrap()).collect();
    assert!(files.contains(&"identity_suite.csv") && files.contains(&"summary.json"));
    for f in files {
        assert!(out_dir.join(f).exists());
    }
    let leftovers = fs::read_dir(&out_dir).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp"));
    assert_eq!(leftovers.count(), 0);
}

#[test]
fn seeded_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(r#"{{"experiment": "llt-positive", "step": {SIMPLE}, "n_list": [50, 100], "count": 2000, "seed": 7}}"#),
    );
    let mut tables = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(name);
        let r = fluctlab(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(r.status.code(), Some(0));
        tables.push(fs::read_to_string(out.join("meander_ks.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn json_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "meander-integral", "x_list": [1.0], "format": "json"}"#);
    let out = dir.path().join("o");
    let r = fluctlab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    let t: Value = serde_json::from_str(&fs::read_to_string(out.join("meander_integral.json")).unwrap()).unwrap();
    assert_eq!(t["schema_version"], 1);
    assert!(t["rows"][0]["meander_residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"experiment": "no-such-thing", "n_list": [1]}"#.to_string(),
        format!(r#"{{"experiment": "llt-positive", "step": {SIMPLE}, "n_list": [10], "bogus": 1}}"#),
        format!(r#"{{"experiment": "llt-positive", "step": {SIMPLE}, "n_list": [10, 5]}}"#),
        r#"{"experiment": "llt-positive", "step": {"shift": 0.0, "span": 1.0, "atoms": [[-1, 0.5], [2, 0.5]]}, "n_list": [10]}"#.to_string(),
        "not json".to_string(),
    ];
    for body in &cases {
        let cfg = write_config(dir.path(), body);
        let out = dir.path().join("x");
        let validate = ["validate", "--config", cfg.as_str()];
        let run = ["run", "--config", cfg.as_str(), "--out", out.to_str().unwrap()];
        for args in [&validate[..], &run[..]] {
            let r = fluctlab(args);
            assert_eq!(r.status.code(), Some(2), "{body}");
            assert_eq!(stderr_json(&r)["exit_code"], 2);
        }
    }
    assert!(!dir.path().join("x").exists());
    let r = fluctlab(&["run"]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(stderr_json(&r)["error"], "ConfigInvalid");
}

#[test]
fn enumeration_budget_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{{"experiment": "identity-suite", "step": {SIMPLE}, "n_list": [60]}}"#));
    let r = fluctlab(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(3));
    assert_eq!(stderr_json(&r)["error"], "ExplosionGuard");
}
