use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ProviderError;
use crate::canonical;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub url: String,
    pub title: String,
    pub snippet: String,
}

pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, ProviderError>;
}

/// Fixture key for a query: SHA-256 of its UTF-8 bytes.
pub fn query_digest(query: &str) -> String {
    canonical::sha256_hex(query.as_bytes())
}

/// Results keyed by query digest; unseeded queries return an empty list.
///
/// Fixture directory layout: `<dir>/<digest>.json`, each a JSON object
/// `{"query": ..., "results": [{url, title, snippet}, ...]}`.
#[derive(Debug, Clone, Default)]
pub struct MockSearch {
    fixtures: HashMap<String, Vec<SearchResult>>,
    unavailable: bool,
}

#[derive(Deserialize)]
struct SearchFixture {
    query: String,
    results: Vec<SearchResult>,
}

impl MockSearch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn unavailable() -> Self {
        Self {
            unavailable: true,
            ..Self::default()
        }
    }

    pub fn seed(&mut self, query: &str, results: Vec<SearchResult>) {
        self.fixtures.insert(query_digest(query), results);
    }

    /// Loads every `*.json` fixture in `dir`. The stored query is re-hashed,
    /// so file names are informational.
    pub fn load_dir(&mut self, dir: &Path) -> Result<(), ProviderError> {
        let entries = fs::read_dir(dir)
            .map_err(|e| ProviderError::InvalidRequest(format!("reading {}: {e}", dir.display())))?;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let raw = fs::read_to_string(&path)
                .map_err(|e| ProviderError::InvalidRequest(format!("reading {}: {e}", path.display())))?;
            let fixture: SearchFixture = serde_json::from_str(&raw).map_err(|e| {
                ProviderError::InvalidRequest(format!("bad search fixture {}: {e}", path.display()))
            })?;
            self.seed(&fixture.query, fixture.results);
        }
        Ok(())
    }
}

impl SearchProvider for MockSearch {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, ProviderError> {
        if self.unavailable {
            return Err(ProviderError::Unavailable("mock search disabled".into()));
        }
        Ok(self
            .fixtures
            .get(&query_digest(query))
            .map(|r| r.iter().take(max_results).cloned().collect())
            .unwrap_or_default())
    }
}
