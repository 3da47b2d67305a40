#![allow(dead_code)]

use std::path::{Path, PathBuf};

use insitu_core::config::EngineConfig;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn snapshot_json(name: &str) -> serde_json::Value {
    let raw = std::fs::read_to_string(fixtures().join("snapshots").join(format!("{name}.json"))).unwrap();
    serde_json::from_str(&raw).unwrap()
}

pub fn engine_config(data_dir: &Path, mock: &str) -> EngineConfig {
    let mut cfg = EngineConfig { data_dir: data_dir.to_path_buf(), ..Default::default() };
    cfg.providers.mock.fixtures_dir = Some(fixtures().join(mock));
    cfg
}
