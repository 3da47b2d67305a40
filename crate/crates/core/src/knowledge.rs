//! Interface identity and the markdown knowledge summary built from web
//! search results and the element listing.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::dom_model::{element_listing, DomSnapshot, UiElement};
use crate::providers::{synth, GenerationRequest, ProviderError, Providers, SearchResult, TemplateId};

pub const SEARCH_RESULTS: usize = 5;
pub const DOCUMENTS_CHAR_LIMIT: usize = 4000;
pub const KNOWLEDGE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("snapshot url {0:?} is not an absolute url")]
    BadUrl(String),
    #[error("knowledge unavailable: search failed ({search}) and generation failed ({generation})")]
    Unavailable { search: String, generation: String },
    #[error("knowledge io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt knowledge file: {0}")]
    Corrupt(String),
}

/// Stable id for an interface: hash of the URL's origin and path. Query
/// strings and fragments do not change the interface.
pub fn interface_id(page_url: &str) -> Result<String, KnowledgeError> {
    let url = url::Url::parse(page_url).map_err(|_| KnowledgeError::BadUrl(page_url.to_string()))?;
    if url.cannot_be_a_base() {
        return Err(KnowledgeError::BadUrl(page_url.to_string()));
    }
    let key = format!("{}{}", url.origin().ascii_serialization(), url.path());
    Ok(canonical::sha256_hex(key.as_bytes())[..16].to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceKnowledge {
    pub interface_id: String,
    pub page_title: String,
    pub page_url: String,
    pub summary: String,
    pub sources: Vec<String>,
    /// Set when the summary was built without any search results.
    pub degraded: bool,
}

pub fn search_query(page_title: &str) -> String {
    format!("{} tutorial documentation features", page_title.trim())
}

/// Search results flattened into the `documents` slot, cut at a char
/// boundary once the limit is reached.
pub fn format_documents(results: &[SearchResult]) -> String {
    let joined = results
        .iter()
        .map(|r| format!("Title: {}\nURL: {}\n{}", r.title, r.url, r.snippet))
        .collect::<Vec<_>>()
        .join("\n\n");
    joined.chars().take(DOCUMENTS_CHAR_LIMIT).collect()
}

fn title_for(snapshot: &DomSnapshot) -> String {
    if !snapshot.title.trim().is_empty() {
        return snapshot.title.trim().to_string();
    }
    url::Url::parse(&snapshot.url)
        .ok()
        .and_then(|u| u.host_str().map(str::to_string))
        .unwrap_or_else(|| snapshot.url.clone())
}

pub fn build_knowledge(
    snapshot: &DomSnapshot,
    elements: &[UiElement],
    providers: &Providers,
) -> Result<InterfaceKnowledge, KnowledgeError> {
    let id = interface_id(&snapshot.url)?;
    let title = title_for(snapshot);
    let (results, search_error) = match providers.search(&search_query(&title), SEARCH_RESULTS) {
        Ok(r) => (r, None),
        Err(e) => {
            log::warn!("knowledge search failed for {}: {e}", snapshot.url);
            (Vec::new(), Some(e))
        }
    };
    let documents = format_documents(&results);
    let listing = element_listing(elements);
    let context: BTreeMap<String, String> = [
        ("page_title", title.clone()),
        ("page_url", snapshot.url.clone()),
        ("documents", documents.clone()),
        ("ui_elements", listing.clone()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let request = GenerationRequest::new(TemplateId::KnowledgeSummary, context)
        .expect("summary slots are complete");
    let summary = match providers.generate(&request) {
        Ok(text) if !text.trim().is_empty() => text.trim().to_string(),
        outcome => {
            let generation_error = match outcome {
                Err(e) => e,
                Ok(_) => ProviderError::MalformedResponse("empty summary".into()),
            };
            if results.is_empty() {
                return Err(KnowledgeError::Unavailable {
                    search: search_error
                        .map(|e| e.to_string())
                        .unwrap_or_else(|| "no results".into()),
                    generation: generation_error.to_string(),
                });
            }
            log::warn!("knowledge generation failed, using local summary: {generation_error}");
            synth::summary(&title, &snapshot.url, &documents, &listing).trim().to_string()
        }
    };
    Ok(InterfaceKnowledge {
        interface_id: id,
        page_title: title,
        page_url: snapshot.url.clone(),
        summary,
        sources: results.iter().map(|r| r.url.clone()).collect(),
        degraded: results.is_empty(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct KnowledgeFile {
    schema_version: u32,
    checksum: String,
    knowledge: InterfaceKnowledge,
}

impl InterfaceKnowledge {
    pub fn to_canonical_json(&self) -> String {
        let file = KnowledgeFile {
            schema_version: KNOWLEDGE_SCHEMA_VERSION,
            checksum: canonical::digest(self).expect("knowledge serializes"),
            knowledge: self.clone(),
        };
        canonical::to_canonical_string(&file).expect("knowledge serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self, KnowledgeError> {
        let file: KnowledgeFile =
            serde_json::from_str(raw).map_err(|e| KnowledgeError::Corrupt(e.to_string()))?;
        if file.schema_version != KNOWLEDGE_SCHEMA_VERSION {
            return Err(KnowledgeError::Corrupt(format!(
                "unsupported schema_version {}",
                file.schema_version
            )));
        }
        if canonical::digest(&file.knowledge).expect("knowledge serializes") != file.checksum {
            return Err(KnowledgeError::Corrupt("checksum mismatch".into()));
        }
        Ok(file.knowledge)
    }

    pub fn save(&self, path: &Path) -> Result<(), KnowledgeError> {
        crate::handbook::write_atomic(path, self.to_canonical_json().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom_model::{extract_interactables, parse_snapshot};
    use crate::providers::{MockEmbedder, MockGenerator, MockSearch};
    use std::sync::Arc;

    fn snapshot() -> DomSnapshot {
        parse_snapshot(
            r#"{"url": "https://playground.tensorflow.org/#activation=tanh", "title": "TensorFlow Playground",
                "captured_at": "2026-01-01T00:00:00Z",
                "nodes": [
                  {"id": 0, "tag": "body", "text": "", "attrs": {}, "children": [1], "bbox": {"x": 0, "y": 0, "w": 800, "h": 600}, "flags": ["visible"]},
                  {"id": 1, "tag": "button", "text": "Play", "attrs": {}, "children": [], "bbox": {"x": 0, "y": 0, "w": 40, "h": 20}, "flags": ["visible"]}
                ]}"#,
        )
        .unwrap()
    }

    fn providers(search: MockSearch, generator: MockGenerator) -> Providers {
        Providers::new(Arc::new(MockEmbedder::new()), Arc::new(generator), Arc::new(search))
    }

    fn seeded() -> MockSearch {
        let mut s = MockSearch::new();
        s.seed(
            "TensorFlow Playground tutorial documentation features",
            (0..3)
                .map(|i| SearchResult {
                    url: format!("https://example.org/doc{i}"),
                    title: format!("Doc {i}"),
                    snippet: "Neural networks in the browser".into(),
                })
                .collect(),
        );
        s
    }

    #[test]
    fn interface_id_ignores_query_and_fragment() {
        let a = interface_id("https://playground.tensorflow.org/#activation=tanh").unwrap();
        let b = interface_id("https://playground.tensorflow.org/?x=1").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        assert_ne!(a, interface_id("https://playground.tensorflow.org/other").unwrap());
        assert!(interface_id("not a url").is_err());
    }

    #[test]
    fn summary_from_search_results() {
        let snap = snapshot();
        let p = providers(seeded(), MockGenerator::synthesizing());
        let k = build_knowledge(&snap, &extract_interactables(&snap), &p).unwrap();
        assert!(!k.degraded);
        assert_eq!(k.sources.len(), 3);
        for h in ["## What it is", "## Features", "## Supported interactions", "## Unsupported interactions"] {
            assert!(k.summary.contains(h), "{h}");
        }
        let calls = p.calls();
        assert_eq!((calls.search, calls.generate), (1, 1));
    }

    #[test]
    fn search_outage_degrades() {
        let snap = snapshot();
        let p = providers(MockSearch::unavailable(), MockGenerator::synthesizing());
        let k = build_knowledge(&snap, &extract_interactables(&snap), &p).unwrap();
        assert!(k.degraded);
        assert!(k.sources.is_empty());
    }

    #[test]
    fn generation_outage_with_results_uses_local_summary() {
        let snap = snapshot();
        let p = providers(seeded(), MockGenerator::unavailable());
        let k = build_knowledge(&snap, &extract_interactables(&snap), &p).unwrap();
        assert!(k.summary.starts_with("## What it is"));
        let p = providers(MockSearch::unavailable(), MockGenerator::unavailable());
        assert!(matches!(
            build_knowledge(&snap, &extract_interactables(&snap), &p),
            Err(KnowledgeError::Unavailable { .. })
        ));
    }

    #[test]
    fn documents_are_truncated() {
        let big = SearchResult {
            url: "u".into(),
            title: "t".into(),
            snippet: "é".repeat(5000),
        };
        assert_eq!(format_documents(&[big]).chars().count(), DOCUMENTS_CHAR_LIMIT);
    }

    #[test]
    fn knowledge_file_roundtrip() {
        let snap = snapshot();
        let p = providers(seeded(), MockGenerator::synthesizing());
        let k = build_knowledge(&snap, &extract_interactables(&snap), &p).unwrap();
        let json = k.to_canonical_json();
        assert_eq!(InterfaceKnowledge::from_json(&json).unwrap(), k);
        assert!(InterfaceKnowledge::from_json(&json.replace("Doc 1", "Doc 9")).is_err());
    }
}
