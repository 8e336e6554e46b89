use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_asepkpz"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).env_remove("ASEPKPZ_THREADS").output().unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("cfg.toml");
    fs::write(
        &path,
        r#"
seed = 7
replicas = 200

[compare]
n_list = [16, 32]
she_cells = 32
t = 0.05

[she]
cells = 16
horizon = 0.02
"#,
    )
    .unwrap();
    path
}

fn run_dir(out: &Path) -> PathBuf {
    let mut dirs: Vec<PathBuf> = fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

fn file_hashes(dir: &Path) -> BTreeMap<String, String> {
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["name"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn print_defaults_is_valid_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["config", "--print-defaults"], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[compare]"));
    fs::write(tmp.path().join("d.toml"), &text).unwrap();
    let out = run(&["params", "--config", "d.toml", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "replicas = 0\n[compare]\nx_points = 1\n").unwrap();
    let out = run(&["compare", "--config", "bad.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("replicas") && err.contains("x_points"), "{err}");

    fs::write(tmp.path().join("typo.toml"), "sed = 3\n").unwrap();
    assert_eq!(run(&["params", "--config", "typo.toml"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["params"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["params", "--config", "missing.toml"], tmp.path()).status.code(), Some(2));
}

#[test]
fn rerun_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    small_config(tmp.path());
    let args = ["identities", "--config", "cfg.toml", "--out", "o"];
    assert_eq!(run(&args, tmp.path()).status.code(), Some(0));
    assert_eq!(run(&args, tmp.path()).status.code(), Some(2));
    let forced = [&args[..], &["--force"]].concat();
    assert_eq!(run(&forced, tmp.path()).status.code(), Some(0));
    let dir = run_dir(&tmp.path().join("o"));
    assert!(dir.file_name().unwrap().to_str().unwrap().starts_with("identities-"));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["passed"], true);
    assert_eq!(manifest["complete"], true);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("key_identity.json")).unwrap()).unwrap();
    let first = &report[0];
    for key in ["identity", "params", "value", "expected", "abs_err", "route_gap", "tail_bound"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    assert!((first["value"].as_f64().unwrap() - (1.0 - 1.0 / 300.0)).abs() < 1e-7);
}

#[test]
fn results_independent_of_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    small_config(tmp.path());
    let one = run(&["compare", "--config", "cfg.toml", "--out", "t1", "--threads", "1"], tmp.path());
    assert!(one.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&one.stderr));
    let four = bin()
        .args(["compare", "--config", "cfg.toml", "--out", "t4"])
        .env("ASEPKPZ_THREADS", "4")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(one.status.code(), four.status.code());
    let (d1, d4) = (run_dir(&tmp.path().join("t1")), run_dir(&tmp.path().join("t4")));
    assert_eq!(d1.file_name(), d4.file_name());
    let (h1, h4) = (file_hashes(&d1), file_hashes(&d4));
    assert!(h1.contains_key("compare.csv"));
    assert_eq!(h1, h4);
    let m4: serde_json::Value = serde_json::from_str(&fs::read_to_string(d4.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m4["threads"], 4);
}

#[test]
fn seed_override_changes_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    small_config(tmp.path());
    assert_eq!(run(&["params", "--config", "cfg.toml", "--out", "a"], tmp.path()).status.code(), Some(0));
    assert_eq!(run(&["params", "--config", "cfg.toml", "--out", "b", "--seed", "8"], tmp.path()).status.code(), Some(0));
    assert_ne!(run_dir(&tmp.path().join("a")).file_name(), run_dir(&tmp.path().join("b")).file_name());
}
