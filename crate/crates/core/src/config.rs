//! Engine configuration, read from TOML or JSON.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::grounding::GroundingConfig;
use crate::providers::ProvidersConfig;
use crate::recommender::RecommenderConfig;

pub const CONFIG_ENV: &str = "INSITU_CONFIG";
pub const DATA_DIR_ENV: &str = "INSITU_DATA_DIR";
pub const DEFAULT_HANDBOOK_SIZE: usize = 120;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub data_dir: PathBuf,
    /// Cases requested when building a handbook.
    pub handbook_size: usize,
    /// Write handbooks and knowledge to `data_dir`.
    pub persist: bool,
    pub bind: String,
    pub recommender: RecommenderConfig,
    pub grounding: GroundingConfig,
    pub providers: ProvidersConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("insitu-data"),
            handbook_size: DEFAULT_HANDBOOK_SIZE,
            persist: true,
            bind: "127.0.0.1:8787".into(),
            recommender: RecommenderConfig::default(),
            grounding: GroundingConfig::default(),
            providers: ProvidersConfig::default(),
        }
    }
}

impl EngineConfig {
    /// Parses TOML, or JSON when the file name ends in `.json`. Relative
    /// paths are resolved against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let raw = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut cfg: EngineConfig = if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::from_str(&raw).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(&raw).map_err(|e| parse_err(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data_dir.is_relative() {
            cfg.data_dir = base.join(&cfg.data_dir);
        }
        if let Some(dir) = &cfg.providers.mock.fixtures_dir {
            if dir.is_relative() {
                cfg.providers.mock.fixtures_dir = Some(base.join(dir));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// `explicit` path, else `$INSITU_CONFIG`, else defaults; then
    /// `$INSITU_DATA_DIR` overrides the data directory.
    pub fn load(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        let from_env = env::var_os(CONFIG_ENV).map(PathBuf::from);
        let mut cfg = match explicit.map(Path::to_path_buf).or(from_env) {
            Some(p) => Self::from_file(&p)?,
            None => Self::default(),
        };
        if let Some(dir) = env::var_os(DATA_DIR_ENV) {
            cfg.data_dir = PathBuf::from(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.handbook_size == 0 {
            return Err(ConfigError::Invalid("handbook_size must be at least 1".into()));
        }
        self.recommender.validate().map_err(ConfigError::Invalid)?;
        if !(0.0..=1.0).contains(&self.grounding.sigma_min) {
            return Err(ConfigError::Invalid(format!(
                "grounding.sigma_min must lie in [0, 1], got {}",
                self.grounding.sigma_min
            )));
        }
        Ok(())
    }

    pub fn interface_dir(&self, interface_id: &str) -> PathBuf {
        self.data_dir.join("interfaces").join(interface_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recommender::Method;

    #[test]
    fn toml_with_defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("insitu.toml");
        fs::write(
            &path,
            "data_dir = \"data\"\nhandbook_size = 40\n[recommender]\nmethod = \"handbook_only\"\n[providers.mock]\nfixtures_dir = \"fx\"\ngeneration_latency_ms = 10\n",
        )
        .unwrap();
        let cfg = EngineConfig::from_file(&path).unwrap();
        assert_eq!(cfg.data_dir, dir.path().join("data"));
        assert_eq!(cfg.handbook_size, 40);
        assert_eq!(cfg.recommender.method, Method::HandbookOnly);
        assert_eq!(cfg.recommender.k, 3);
        assert_eq!(cfg.recommender.tau, 0.5);
        assert_eq!(cfg.grounding.sigma_min, 0.15);
        assert!(cfg.providers.mock.synthesize);
        assert_eq!(cfg.providers.mock.fixtures_dir, Some(dir.path().join("fx")));
    }

    #[test]
    fn rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[recommender]\nk = 0\n").unwrap();
        assert!(matches!(EngineConfig::from_file(&path), Err(ConfigError::Invalid(_))));
        fs::write(&path, "unknown_key = 1\n").unwrap();
        assert!(matches!(EngineConfig::from_file(&path), Err(ConfigError::Parse { .. })));
    }
}
