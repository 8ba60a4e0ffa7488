use std::path::Path;
use std::process::Command;

fn evcs(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_evcs"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("spawn evcs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn export_then_solve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    evcs(dir.path(), &["--scenarios", "1", "export-model", "--stage", "3"]);
    let lp = dir.path().join("model.lp");
    assert!(lp.exists());
    let out = evcs(dir.path(), &["--time-limit-ms", "5000", "solve-lp", lp.to_str().unwrap()]);
    assert!(out.starts_with("status"), "{out}");
    let solution = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(solution.starts_with("column,value"));
    assert_eq!(manifest(dir.path())["command"], "solve-lp");
}

#[test]
fn greedy_day_writes_trace_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = evcs(dir.path(), &["--seed", "7", "simulate", "--price", "1.5", "--control", "greedy"]);
    assert!(out.contains("price_std"));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 25);
    let m = manifest(dir.path());
    assert_eq!(m["learn_seed"], 7);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn same_config_same_hash() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    evcs(a.path(), &["simulate", "--price", "1.0", "--control", "delayed"]);
    evcs(b.path(), &["--config", a.path().join("config.toml").to_str().unwrap(), "simulate", "--price", "1.0", "--control", "delayed"]);
    assert_eq!(manifest(a.path())["config_sha256"], manifest(b.path())["config_sha256"]);
    assert_eq!(
        std::fs::read_to_string(a.path().join("trace.csv")).unwrap(),
        std::fs::read_to_string(b.path().join("trace.csv")).unwrap()
    );
}

#[test]
fn unknown_profile_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_evcs"))
        .args(["--profile", "huge", "--out-dir"])
        .arg(dir.path())
        .arg("validate")
        .output()
        .unwrap();
    assert!(!out.status.success());
}
