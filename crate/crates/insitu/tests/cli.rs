//! The `insitu` binary.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn write_config(dir: &Path, mock: &str) -> PathBuf {
    let path = dir.join("insitu.toml");
    let text = format!(
        "data_dir = \"data\"\n[providers.mock]\nfixtures_dir = {:?}\n",
        common::fixtures().join(mock).display().to_string()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn insitu(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_insitu"));
    cmd.args(args).env_remove("INSITU_CONFIG").env_remove("INSITU_DATA_DIR").env("RUST_LOG", "warn");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

#[test]
fn handbook_build_stores_the_handbook() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "mock");
    let data = dir.path().join("elsewhere");
    let snapshot = common::fixtures().join("snapshots/voyager.json");
    let out = insitu(
        &[
            "handbook", "build",
            "--interface", "https://voyager.insitu.test/app/cars",
            "--snapshot", snapshot.to_str().unwrap(),
            "-n", "40",
        ],
        &[("INSITU_CONFIG", &config), ("INSITU_DATA_DIR", &data)],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let status: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(status["status"], "ready");
    let size = status["handbook_size"].as_u64().unwrap();
    assert!(size > 30 && size <= 40, "{size}");
    let id = insitu_core::knowledge::interface_id("https://voyager.insitu.test/app/cars").unwrap();
    let stored = data.join("interfaces").join(&id);
    assert!(stored.join("handbook.json").is_file());
    assert!(stored.join("knowledge.json").is_file());
    assert!(!dir.path().join("data").exists(), "INSITU_DATA_DIR must win over the config");
}

#[test]
fn eval_writes_to_stdout_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "mock");
    let dataset = common::fixtures().join("eval/dataset.jsonl");
    let out = insitu(
        &["--config", config.to_str().unwrap(), "eval", "--dataset", dataset.to_str().unwrap(), "--method", "handbook"],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["method"], "handbook_only");
    assert_eq!(report["n_records"], 24);
    assert!(report.get("resolution").is_none());
    assert!(!dir.path().join("data").exists(), "eval must not persist");
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = insitu(&["eval", "--dataset", missing.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let out = insitu(&["eval", "--dataset", "x", "--method", "oracle"], &[]);
    assert!(!out.status.success());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "handbook_size = 0\n").unwrap();
    let out = insitu(&["--config", bad.to_str().unwrap(), "eval", "--dataset", "x"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("handbook_size"));
}
