use std::path::Path;
use std::process::{Command, Output};

fn mfg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfg")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_artifacts_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = mfg(&["run", "-p", "test2a", "-s", "fd", "-n", "32", "-o", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("converged"));
    for f in ["fields_u.csv", "fields_m.csv", "history.json", "meta.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let meta = json(&out_dir.join("meta.json"));
    assert_eq!(meta["config"]["newton"]["scheme"], "fd");
    assert_eq!(meta["config"]["n_space"], 32);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "problem = \"test2a\"\nn_space = 16\n[newton]\nscheme = \"sl\"\ntolerance = 1e-6\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = mfg(&["run", "-c", cfg.to_str().unwrap(), "-n", "24", "--sequential", "-o", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let meta = json(&out_dir.join("meta.json"));
    assert_eq!(meta["config"]["n_space"], 24);
    assert_eq!(meta["config"]["newton"]["tolerance"], 1e-6);
    assert_eq!(meta["execution"], "sequential");
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    assert_eq!(mfg(&["run", "-n", "20", "-o", o]).status.code(), Some(2));
    assert_eq!(mfg(&["run", "-p", "test1", "-n", "2", "-o", o]).status.code(), Some(2));
    assert_eq!(mfg(&["run", "-p", "test1", "--tolerance", "-1", "-o", o]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "problem = \"test1\"\nbogus = 3\n").unwrap();
    assert_eq!(mfg(&["run", "-c", bad.to_str().unwrap(), "-o", o]).status.code(), Some(2));
    // clap rejects unknown values with its own usage error code
    assert_ne!(mfg(&["run", "-p", "test9"]).status.code(), Some(0));
}

#[test]
fn solver_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("fail");
    let out = mfg(&[
        "run", "-p", "test2b", "-s", "fd", "-n", "80", "--globalization", "off", "-o", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let history = json(&out_dir.join("history.json"));
    assert_eq!(history["status"], "breakdown_negative_density");
}

#[test]
fn study_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("study");
    let out = mfg(&["study", "-p", "test1", "--grids", "20,40", "--factor", "2", "-o", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(o.join("table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let table = json(&o.join("table.json"));
    assert_eq!(table["reference_n_space"], 80);
    assert_eq!(table["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn compare_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("cmp");
    let out = mfg(&["compare", "-p", "test2a", "-n", "40", "-o", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&o.join("comparison.json"));
    let entries = report["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert!(entries.iter().all(|e| e["status"] == "converged"));
}

#[test]
fn props_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = mfg(&["props", "--seed", "7", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().all(|l| l.ends_with("pass")));
    let report = json(&dir.path().join("props.json"));
    assert_eq!(report["seed"], 7);
}
