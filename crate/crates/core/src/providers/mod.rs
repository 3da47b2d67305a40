//! Text generation, embedding and web search behind swappable clients,
//! each with a deterministic offline mock.
//!
//! [`Providers`] bundles one client per capability and counts every call it
//! forwards, so tests can assert which stages touched which provider.

pub mod embedding;
pub mod generation;
pub mod http;
pub mod search;
pub(crate) mod synth;

use std::env;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use embedding::{quantize, Embedder, MockEmbedder, Similarity, Vector, MOCK_DIMENSION};
pub use generation::{
    extract_json, GenerationRequest, Generator, MockGenerator, ResponseSchema, TemplateId,
};
pub use http::{ApiFlavor, HttpProvider};
pub use search::{MockSearch, SearchProvider, SearchResult};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("text to embed is empty")]
    EmptyText,
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("invalid provider request: {0}")]
    InvalidRequest(String),
}

/// Call counts per capability. Updated atomically.
#[derive(Debug, Default)]
pub struct ProviderCounters {
    embed: AtomicU64,
    generate: AtomicU64,
    search: AtomicU64,
    retrieve: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub embed: u64,
    pub generate: u64,
    pub search: u64,
    pub retrieve: u64,
}

impl CallCounts {
    pub fn since(&self, earlier: &CallCounts) -> CallCounts {
        CallCounts {
            embed: self.embed - earlier.embed,
            generate: self.generate - earlier.generate,
            search: self.search - earlier.search,
            retrieve: self.retrieve - earlier.retrieve,
        }
    }
}

impl ProviderCounters {
    pub fn snapshot(&self) -> CallCounts {
        CallCounts {
            embed: self.embed.load(Ordering::SeqCst),
            generate: self.generate.load(Ordering::SeqCst),
            search: self.search.load(Ordering::SeqCst),
            retrieve: self.retrieve.load(Ordering::SeqCst),
        }
    }

    /// Handbook retrievals are counted here too so method isolation can be
    /// checked from one place.
    pub fn record_retrieval(&self) {
        self.retrieve.fetch_add(1, Ordering::SeqCst);
    }
}

#[derive(Clone)]
pub struct Providers {
    embedder: Arc<dyn Embedder>,
    generator: Arc<dyn Generator>,
    search: Arc<dyn SearchProvider>,
    counters: Arc<ProviderCounters>,
}

impl std::fmt::Debug for Providers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Providers").field("counters", &self.counters.snapshot()).finish()
    }
}

impl Providers {
    pub fn new(
        embedder: Arc<dyn Embedder>,
        generator: Arc<dyn Generator>,
        search: Arc<dyn SearchProvider>,
    ) -> Self {
        Self {
            embedder,
            generator,
            search,
            counters: Arc::new(ProviderCounters::default()),
        }
    }

    /// Mock embedder, synthesizing mock generator, empty mock search.
    pub fn mock() -> Self {
        Self::new(
            Arc::new(MockEmbedder::new()),
            Arc::new(MockGenerator::synthesizing()),
            Arc::new(MockSearch::new()),
        )
    }

    pub fn with_generator(mut self, generator: Arc<dyn Generator>) -> Self {
        self.generator = generator;
        self
    }

    pub fn with_search(mut self, search: Arc<dyn SearchProvider>) -> Self {
        self.search = search;
        self
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = embedder;
        self
    }

    /// Same clients, separate call counters.
    pub fn with_new_counters(&self) -> Self {
        Self {
            counters: Arc::new(ProviderCounters::default()),
            ..self.clone()
        }
    }

    pub fn counters(&self) -> &ProviderCounters {
        &self.counters
    }

    pub fn calls(&self) -> CallCounts {
        self.counters.snapshot()
    }

    pub fn embed(&self, text: &str) -> Result<Vector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        self.counters.embed.fetch_add(1, Ordering::SeqCst);
        self.embedder.embed(text)
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        self.counters.generate.fetch_add(1, Ordering::SeqCst);
        self.generator.generate(request)
    }

    pub fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, ProviderError> {
        if query.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("search query is empty".into()));
        }
        if !(1..=20).contains(&max_results) {
            return Err(ProviderError::InvalidRequest(format!(
                "max_results must be in [1, 20], got {max_results}"
            )));
        }
        self.counters.search.fetch_add(1, Ordering::SeqCst);
        let mut results = self.search.search(query, max_results)?;
        results.truncate(max_results);
        Ok(results)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    Mock,
    OpenaiCompatible,
    AnthropicCompatible,
    GeminiCompatible,
    TavilyCompatible,
}

impl ProviderKind {
    fn flavor(&self) -> Option<ApiFlavor> {
        match self {
            ProviderKind::Mock => None,
            ProviderKind::OpenaiCompatible => Some(ApiFlavor::OpenAi),
            ProviderKind::AnthropicCompatible => Some(ApiFlavor::Anthropic),
            ProviderKind::GeminiCompatible => Some(ApiFlavor::Gemini),
            ProviderKind::TavilyCompatible => Some(ApiFlavor::Tavily),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: None,
            model: String::new(),
            api_key_env: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockConfig {
    /// Root with `generation/<template_id>/...` and `search/*.json` fixtures.
    #[serde(default)]
    pub fixtures_dir: Option<PathBuf>,
    #[serde(default)]
    pub generation_latency_ms: u64,
    #[serde(default)]
    pub embedding_latency_ms: u64,
    /// Synthesize responses for requests no fixture covers.
    #[serde(default = "yes")]
    pub synthesize: bool,
}

fn yes() -> bool {
    true
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            fixtures_dir: None,
            generation_latency_ms: 0,
            embedding_latency_ms: 0,
            synthesize: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvidersConfig {
    #[serde(default)]
    pub generation: ProviderConfig,
    #[serde(default)]
    pub embedding: ProviderConfig,
    #[serde(default)]
    pub search: ProviderConfig,
    #[serde(default)]
    pub mock: MockConfig,
}

impl ProvidersConfig {
    pub fn build(&self) -> Result<Providers, ProviderError> {
        let mock = &self.mock;
        let fixtures = mock.fixtures_dir.clone();

        let embedder: Arc<dyn Embedder> = match self.embedding.kind {
            ProviderKind::Mock => Arc::new(MockEmbedder::with_latency(Duration::from_millis(
                mock.embedding_latency_ms,
            ))),
            ProviderKind::OpenaiCompatible | ProviderKind::GeminiCompatible => {
                Arc::new(http_client(&self.embedding)?)
            }
            other => {
                return Err(ProviderError::InvalidRequest(format!(
                    "{other:?} cannot serve embeddings"
                )))
            }
        };

        let generator: Arc<dyn Generator> = match self.generation.kind {
            ProviderKind::Mock => {
                let mut g = MockGenerator::new()
                    .with_synthesis(mock.synthesize)
                    .with_latency(Duration::from_millis(mock.generation_latency_ms));
                if let Some(dir) = &fixtures {
                    let dir = dir.join("generation");
                    if dir.is_dir() {
                        g.load_dir(&dir)?;
                    }
                }
                Arc::new(g)
            }
            ProviderKind::TavilyCompatible => {
                return Err(ProviderError::InvalidRequest(
                    "a search provider cannot serve generation".into(),
                ))
            }
            _ => Arc::new(http_client(&self.generation)?),
        };

        let search: Arc<dyn SearchProvider> = match self.search.kind {
            ProviderKind::Mock => {
                let mut s = MockSearch::new();
                if let Some(dir) = &fixtures {
                    let dir = dir.join("search");
                    if dir.is_dir() {
                        s.load_dir(&dir)?;
                    }
                }
                Arc::new(s)
            }
            ProviderKind::TavilyCompatible => Arc::new(http_client(&self.search)?),
            other => {
                return Err(ProviderError::InvalidRequest(format!(
                    "{other:?} cannot serve web search"
                )))
            }
        };

        Ok(Providers::new(embedder, generator, search))
    }
}

fn http_client(cfg: &ProviderConfig) -> Result<HttpProvider, ProviderError> {
    let flavor = cfg.kind.flavor().expect("network provider kind");
    let api_key = match &cfg.api_key_env {
        Some(var) => env::var(var).map_err(|_| {
            ProviderError::InvalidRequest(format!("environment variable {var} is not set"))
        })?,
        None => String::new(),
    };
    Ok(HttpProvider::new(flavor, cfg.endpoint.clone(), cfg.model.clone(), api_key))
}
