use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bsdelab"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

#[test]
fn solve_twice_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let cfg = config("basic.json");
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = run(&["solve", "--config", cfg, "--seed", "7"], &a);
    let second = run(&["solve", "--config", cfg, "--seed", "7", "--workers", "2"], &b);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(second.status.code(), Some(0));
    for f in ["solutions.csv", "summary.csv", "norms.csv", "summary.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn verify_on_the_default_config_passes() {
    let dir = TempDir::new().unwrap();
    let out = run(&["verify", "--suite", "all", "--seed", "7"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let reports = fs::read_to_string(dir.path().join("reports.csv")).unwrap();
    assert!(reports.starts_with("group,fingerprint,id,tier,lhs,rhs"));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["passed"], true);
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn malformed_config_exits_two_with_the_field() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"version": 1, "tree": {"horizon": 1.0, "n_steps": 4, "d": "two"}}"#).unwrap();
    let out = run(&["solve", "--config", bad.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tree.d"));

    let unknown = run(&["verify", "--suite", "nope"], &dir.path().join("o"));
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn failed_assertions_exit_one() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("slow.json");
    let text = fs::read_to_string(config("picard.json"))
        .unwrap()
        .replace(r#""max_iter": 500"#, r#""max_iter": 2"#);
    fs::write(&cfg, text).unwrap();
    let out = run(&["picard", "--config", cfg.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(1));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["passed"], false);
    assert!(!manifest["failures"].as_array().unwrap().is_empty());
}

#[test]
fn replay_reproduces_every_artifact() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let out = run(&["run", "--config", config("reflect.json").to_str().unwrap()], &first);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let again = dir.path().join("again");
    let replay = bin()
        .args(["replay", "--manifest"])
        .arg(first.join("manifest.json"))
        .arg("--out")
        .arg(&again)
        .output()
        .unwrap();
    assert_eq!(replay.status.code(), Some(0), "{}", String::from_utf8_lossy(&replay.stderr));
    for entry in fs::read_dir(&first).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(fs::read(first.join(&name)).unwrap(), fs::read(again.join(&name)).unwrap());
    }

    let tampered = dir.path().join("tampered.json");
    let text = fs::read_to_string(first.join("manifest.json")).unwrap().replacen("\"seed\": 11", "\"seed\": 12", 1);
    fs::write(&tampered, text).unwrap();
    let bad = bin().args(["replay", "--manifest"]).arg(&tampered).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn every_shipped_config_runs_clean() {
    let dir = TempDir::new().unwrap();
    for name in ["basic.json", "reflect.json", "picard.json", "snell.json"] {
        let out = run(&["run", "--config", config(name).to_str().unwrap()], &dir.path().join(name));
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
