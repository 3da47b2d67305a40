//! Per-interface collections of assistance cases, indexed by the embedding
//! of each case's rationale.

pub mod case;
pub mod generate;

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use case::{
    validate_case, AssistanceCase, CaseOrigin, ChallengeCategory, RejectReason, SubtypeId, UiTarget,
    ValidatedCase,
};
pub use generate::{generate_handbook, CaseRejection, GeneratedHandbook};

use crate::canonical;
use crate::providers::{ProviderError, Providers, Similarity, Vector};

pub const HANDBOOK_SCHEMA_VERSION: u32 = 1;

/// Rationales more similar than this to an existing case are not stored.
pub const DEDUP_THRESHOLD: Similarity = 0.98;

#[derive(Debug, thiserror::Error)]
pub enum HandbookError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("handbook io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt handbook: {0}")]
    Corrupt(String),
    #[error("unknown case id {0:?}")]
    UnknownCaseId(String),
    #[error("rating must be +1 or -1, got {0}")]
    InvalidRating(i64),
    #[error("case id {0:?} already exists")]
    DuplicateCaseId(String),
    #[error("no valid cases were generated ({rejected} rejected)")]
    NoValidCases { rejected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCase {
    pub case: AssistanceCase,
    pub score: Similarity,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AddOutcome {
    Added { case_id: String },
    Duplicate { existing_id: String, similarity: Similarity },
}

/// Cases plus their rationale embeddings, kept in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct HandbookIndex {
    interface_id: String,
    cases: Vec<AssistanceCase>,
    vectors: Vec<Vector>,
}

/// Rounds through the persisted encoding so a loaded index ranks exactly
/// like the one that was saved.
fn storable(v: Vector) -> Result<Vector, ProviderError> {
    Vector::from_base64_f32(&v.to_base64_f32())
}

/// Case ids are `<interface_id>/<origin letter><sequence>`.
pub fn case_id(interface_id: &str, origin: CaseOrigin, seq: usize) -> String {
    let letter = match origin {
        CaseOrigin::HandbookGenerated => 'h',
        CaseOrigin::FallbackGenerated => 'f',
    };
    format!("{interface_id}/{letter}{seq:04}")
}

/// The interface a case id belongs to.
pub fn interface_of(case_id: &str) -> Option<&str> {
    case_id.rsplit_once('/').map(|(i, _)| i).filter(|i| !i.is_empty())
}

/// Descending score, then higher feedback, then earlier insertion.
fn rank_order(a: (usize, Similarity, i64), b: (usize, Similarity, i64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(b.2.cmp(&a.2))
        .then(a.0.cmp(&b.0))
}

impl HandbookIndex {
    pub fn empty(interface_id: impl Into<String>) -> Self {
        Self {
            interface_id: interface_id.into(),
            cases: Vec::new(),
            vectors: Vec::new(),
        }
    }

    /// Embeds every rationale. Cases keep their given ids.
    pub fn build(
        interface_id: impl Into<String>,
        cases: Vec<AssistanceCase>,
        providers: &Providers,
    ) -> Result<Self, HandbookError> {
        let mut index = Self::empty(interface_id);
        for case in cases {
            if index.position(&case.case_id).is_some() {
                return Err(HandbookError::DuplicateCaseId(case.case_id));
            }
            let v = storable(providers.embed(&case.rationale)?)?;
            index.cases.push(case);
            index.vectors.push(v);
        }
        Ok(index)
    }

    pub fn interface_id(&self) -> &str {
        &self.interface_id
    }

    pub fn cases(&self) -> &[AssistanceCase] {
        &self.cases
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, case_id: &str) -> Option<&AssistanceCase> {
        self.position(case_id).map(|i| &self.cases[i])
    }

    fn position(&self, case_id: &str) -> Option<usize> {
        self.cases.iter().position(|c| c.case_id == case_id)
    }

    /// Next free sequence number for ids of the given origin.
    pub fn next_id(&self, origin: CaseOrigin) -> String {
        let mut seq = self.cases.len();
        loop {
            let id = case_id(&self.interface_id, origin, seq);
            if self.position(&id).is_none() {
                return id;
            }
            seq += 1;
        }
    }

    /// Top `k` case positions for an already embedded query.
    pub fn rank(&self, query: &Vector, k: usize) -> Vec<(usize, Similarity)> {
        let mut scored: Vec<(usize, Similarity, i64)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (i, query.cosine(v), self.cases[i].feedback))
            .collect();
        scored.sort_by(|a, b| rank_order(*a, *b));
        scored.into_iter().take(k).map(|(i, s, _)| (i, s)).collect()
    }

    /// Embeds `query` and returns the `k` most similar cases. An empty index
    /// returns nothing without calling the embedder.
    pub fn retrieve(&self, query: &str, k: usize, providers: &Providers) -> Result<Vec<ScoredCase>, HandbookError> {
        providers.counters().record_retrieval();
        if self.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let q = providers.embed(query)?;
        Ok(self
            .rank(&q, k)
            .into_iter()
            .map(|(i, score)| ScoredCase {
                case: self.cases[i].clone(),
                score,
            })
            .collect())
    }

    /// Appends a case unless its rationale nearly duplicates a stored one.
    pub fn add_case(&mut self, case: AssistanceCase, providers: &Providers) -> Result<AddOutcome, HandbookError> {
        if self.position(&case.case_id).is_some() {
            return Err(HandbookError::DuplicateCaseId(case.case_id));
        }
        let v = storable(providers.embed(&case.rationale)?)?;
        if let Some((i, sim)) = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, existing)| (i, v.cosine(existing)))
            .filter(|(_, s)| *s > DEDUP_THRESHOLD)
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(b.0.cmp(&a.0)))
        {
            return Ok(AddOutcome::Duplicate {
                existing_id: self.cases[i].case_id.clone(),
                similarity: sim,
            });
        }
        let case_id = case.case_id.clone();
        self.cases.push(case);
        self.vectors.push(v);
        Ok(AddOutcome::Added { case_id })
    }

    /// Applies a +1/-1 rating and returns the new tally.
    pub fn record_feedback(&mut self, case_id: &str, rating: i64) -> Result<i64, HandbookError> {
        if rating != 1 && rating != -1 {
            return Err(HandbookError::InvalidRating(rating));
        }
        let i = self
            .position(case_id)
            .ok_or_else(|| HandbookError::UnknownCaseId(case_id.to_string()))?;
        self.cases[i].feedback += rating;
        Ok(self.cases[i].feedback)
    }

    pub fn to_file(&self) -> HandbookFile {
        let cases: Vec<StoredCase> = self
            .cases
            .iter()
            .zip(&self.vectors)
            .map(|(c, v)| StoredCase {
                case: c.clone(),
                rationale_embedding: v.to_base64_f32(),
            })
            .collect();
        HandbookFile {
            schema_version: HANDBOOK_SCHEMA_VERSION,
            interface_id: self.interface_id.clone(),
            checksum: cases_checksum(&cases),
            cases,
        }
    }

    /// Canonical JSON: sorted keys, no insignificant whitespace.
    pub fn to_canonical_json(&self) -> String {
        canonical::to_canonical_string(&self.to_file()).expect("handbook serializes")
    }

    pub fn from_file(file: HandbookFile) -> Result<Self, HandbookError> {
        if file.schema_version != HANDBOOK_SCHEMA_VERSION {
            return Err(HandbookError::Corrupt(format!(
                "unsupported schema_version {}",
                file.schema_version
            )));
        }
        if cases_checksum(&file.cases) != file.checksum {
            return Err(HandbookError::Corrupt("checksum mismatch".into()));
        }
        let mut index = Self::empty(file.interface_id);
        for stored in file.cases {
            if index.position(&stored.case.case_id).is_some() {
                return Err(HandbookError::Corrupt(format!("duplicate case id {}", stored.case.case_id)));
            }
            stored
                .case
                .revalidate()
                .map_err(|e| HandbookError::Corrupt(format!("case {}: {e}", stored.case.case_id)))?;
            let v = Vector::from_base64_f32(&stored.rationale_embedding)
                .map_err(|e| HandbookError::Corrupt(format!("case {}: {e}", stored.case.case_id)))?;
            if let Some(first) = index.vectors.first() {
                if first.dimension() != v.dimension() {
                    return Err(HandbookError::Corrupt("embedding dimensions differ".into()));
                }
            }
            index.cases.push(stored.case);
            index.vectors.push(v);
        }
        Ok(index)
    }

    pub fn from_json(raw: &str) -> Result<Self, HandbookError> {
        let file: HandbookFile =
            serde_json::from_str(raw).map_err(|e| HandbookError::Corrupt(e.to_string()))?;
        Self::from_file(file)
    }

    /// Writes atomically through a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<(), HandbookError> {
        write_atomic(path, self.to_canonical_json().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HandbookError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredCase {
    #[serde(flatten)]
    pub case: AssistanceCase,
    pub rationale_embedding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandbookFile {
    pub schema_version: u32,
    pub interface_id: String,
    pub checksum: String,
    pub cases: Vec<StoredCase>,
}

fn cases_checksum(cases: &[StoredCase]) -> String {
    canonical::digest(cases).expect("cases serialize")
}
