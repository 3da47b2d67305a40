//! Text-generation requests, the generator trait, and the fixture-backed
//! mock generator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::synth;
use super::ProviderError;
use crate::canonical;
use crate::prompts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    KnowledgeSummary,
    HandbookGeneration,
    FallbackCase,
    Judge,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        TemplateId::KnowledgeSummary,
        TemplateId::HandbookGeneration,
        TemplateId::FallbackCase,
        TemplateId::Judge,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateId::KnowledgeSummary => "knowledge_summary",
            TemplateId::HandbookGeneration => "handbook_generation",
            TemplateId::FallbackCase => "fallback_case",
            TemplateId::Judge => "judge",
        }
    }

    pub fn template(&self) -> &'static str {
        match self {
            TemplateId::KnowledgeSummary => prompts::KNOWLEDGE_SUMMARY,
            TemplateId::HandbookGeneration => prompts::HANDBOOK_GENERATION,
            TemplateId::FallbackCase => prompts::FALLBACK_CASE,
            TemplateId::Judge => prompts::JUDGE,
        }
    }

    /// Identifier of the structured output the caller parses.
    pub fn response_schema(&self) -> ResponseSchema {
        match self {
            TemplateId::KnowledgeSummary => ResponseSchema::MarkdownSummary,
            TemplateId::HandbookGeneration => ResponseSchema::CaseList,
            TemplateId::FallbackCase => ResponseSchema::Case,
            TemplateId::Judge => ResponseSchema::JudgeScore,
        }
    }

    /// Slots the caller must fill.
    pub fn required_slots(&self) -> BTreeSet<String> {
        slot_names(self.template())
            .into_iter()
            .filter(|s| !BUILTIN_SLOTS.iter().any(|(name, _)| name == s))
            .collect()
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = ProviderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ProviderError::InvalidRequest(format!("unknown template_id {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSchema {
    MarkdownSummary,
    CaseList,
    Case,
    JudgeScore,
}

const BUILTIN_SLOTS: [(&str, &str); 2] = [
    ("design_space", prompts::DESIGN_SPACE),
    ("design_space_guidelines", prompts::DESIGN_SPACE_GUIDELINES),
];

fn is_slot_char(c: char) -> bool {
    c.is_ascii_lowercase() || c == '_'
}

/// Names written as `{name}` (lowercase letters and underscores) in `template`.
fn slot_names(template: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) if end > 0 && after[..end].chars().all(is_slot_char) => {
                out.insert(after[..end].to_string());
                rest = &after[end + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub template_id: TemplateId,
    pub context: BTreeMap<String, String>,
    pub response_schema_id: ResponseSchema,
}

impl GenerationRequest {
    /// Fails when any slot named by the template is missing from `context`.
    pub fn new(
        template_id: TemplateId,
        context: BTreeMap<String, String>,
    ) -> Result<Self, ProviderError> {
        let missing: Vec<String> = template_id
            .required_slots()
            .into_iter()
            .filter(|s| !context.contains_key(s))
            .collect();
        if !missing.is_empty() {
            return Err(ProviderError::InvalidRequest(format!(
                "template {template_id} is missing slots: {}",
                missing.join(", ")
            )));
        }
        Ok(Self {
            template_id,
            context,
            response_schema_id: template_id.response_schema(),
        })
    }

    /// Like [`GenerationRequest::new`] but parses the template id.
    pub fn from_parts(
        template_id: &str,
        context: BTreeMap<String, String>,
    ) -> Result<Self, ProviderError> {
        Self::new(template_id.parse()?, context)
    }

    /// The prompt with every slot filled. Filled text is not rescanned.
    pub fn render(&self) -> String {
        let template = self.template_id.template();
        let mut out = String::with_capacity(template.len() * 2);
        let mut rest = template;
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let after = &rest[start + 1..];
            let replacement = after.find('}').and_then(|end| {
                let name = &after[..end];
                if end == 0 || !name.chars().all(is_slot_char) {
                    return None;
                }
                let value = self
                    .context
                    .get(name)
                    .map(String::as_str)
                    .or_else(|| BUILTIN_SLOTS.iter().find(|(n, _)| *n == name).map(|(_, v)| *v))?;
                Some((value, end))
            });
            match replacement {
                Some((value, end)) => {
                    out.push_str(value);
                    rest = &after[end + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }

    /// Digest of the slot map, used as the mock fixture key.
    pub fn context_digest(&self) -> String {
        canonical::digest(&self.context).expect("string map serializes")
    }
}

pub trait Generator: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError>;
}

/// Canned responses keyed by `(template_id, context digest)`, with an
/// optional per-template default and an optional deterministic synthesizer
/// for requests no fixture covers.
///
/// Fixture directory layout: `<dir>/<template_id>/<digest>.txt` and
/// `<dir>/<template_id>/default.txt`.
#[derive(Debug, Clone, Default)]
pub struct MockGenerator {
    keyed: HashMap<(TemplateId, String), String>,
    defaults: HashMap<TemplateId, String>,
    synthesize: bool,
    latency: Duration,
    unavailable: bool,
}

impl MockGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    /// A mock that answers every template by synthesis when no fixture matches.
    pub fn synthesizing() -> Self {
        Self {
            synthesize: true,
            ..Self::default()
        }
    }

    /// A generator that always reports [`ProviderError::Unavailable`].
    pub fn unavailable() -> Self {
        Self {
            unavailable: true,
            ..Self::default()
        }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_synthesis(mut self, enabled: bool) -> Self {
        self.synthesize = enabled;
        self
    }

    pub fn register(&mut self, request: &GenerationRequest, response: impl Into<String>) {
        self.keyed.insert(
            (request.template_id, request.context_digest()),
            response.into(),
        );
    }

    pub fn register_digest(
        &mut self,
        template: TemplateId,
        digest: impl Into<String>,
        response: impl Into<String>,
    ) {
        self.keyed.insert((template, digest.into()), response.into());
    }

    pub fn register_default(&mut self, template: TemplateId, response: impl Into<String>) {
        self.defaults.insert(template, response.into());
    }

    pub fn load_dir(&mut self, dir: &Path) -> Result<(), ProviderError> {
        for template in TemplateId::ALL {
            let sub = dir.join(template.as_str());
            if !sub.is_dir() {
                continue;
            }
            let entries = fs::read_dir(&sub).map_err(|e| {
                ProviderError::InvalidRequest(format!("reading {}: {e}", sub.display()))
            })?;
            for entry in entries.flatten() {
                let path = entry.path();
                if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                    continue;
                }
                let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                    continue;
                };
                let body = fs::read_to_string(&path).map_err(|e| {
                    ProviderError::InvalidRequest(format!("reading {}: {e}", path.display()))
                })?;
                if stem == "default" {
                    self.register_default(template, body);
                } else {
                    self.register_digest(template, stem, body);
                }
            }
        }
        Ok(())
    }
}

impl Generator for MockGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        if self.unavailable {
            return Err(ProviderError::Unavailable("mock generator disabled".into()));
        }
        if !self.latency.is_zero() {
            thread::sleep(self.latency);
        }
        let key = (request.template_id, request.context_digest());
        if let Some(hit) = self.keyed.get(&key).or_else(|| self.defaults.get(&request.template_id)) {
            return Ok(hit.clone());
        }
        if self.synthesize {
            return Ok(synth::respond(request));
        }
        Err(ProviderError::MalformedResponse(format!(
            "no mock fixture for {} / {}",
            request.template_id, key.1
        )))
    }
}

/// Pulls the first JSON value out of model output, tolerating code fences
/// and surrounding prose.
pub fn extract_json(text: &str) -> Result<serde_json::Value, ProviderError> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok(v);
    }
    for (i, c) in trimmed.char_indices() {
        if c == '{' || c == '[' {
            let mut stream =
                serde_json::Deserializer::from_str(&trimmed[i..]).into_iter::<serde_json::Value>();
            if let Some(Ok(v)) = stream.next() {
                return Ok(v);
            }
        }
    }
    Err(ProviderError::MalformedResponse(
        "response contains no JSON value".into(),
    ))
}
