#![allow(dead_code)]

use std::path::PathBuf;

use insitu_core::dom_model::{parse_snapshot, DomSnapshot};
use serde_json::Value;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn read_json(rel: &str) -> Value {
    let path = fixtures().join(rel);
    let raw = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&raw).unwrap()
}

pub fn snapshot(name: &str) -> DomSnapshot {
    let path = fixtures().join("snapshots").join(format!("{name}.json"));
    parse_snapshot(&std::fs::read_to_string(path).unwrap()).unwrap()
}

use insitu_core::config::EngineConfig;

/// Mock providers backed by the bundled search fixtures.
pub fn engine_config(data_dir: &std::path::Path) -> EngineConfig {
    let mut cfg = EngineConfig { data_dir: data_dir.to_path_buf(), ..Default::default() };
    cfg.providers.mock.fixtures_dir = Some(fixtures().join("mock"));
    cfg
}
