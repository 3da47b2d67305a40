//! Chooses between reusing handbook cases and generating a new one for a
//! user's challenge.

use std::time::Instant;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dom_model::{ElementIndex, UiElement};
use crate::handbook::generate::generation_context;
use crate::handbook::{
    validate_case, AddOutcome, AssistanceCase, CaseOrigin, HandbookError, HandbookIndex, RejectReason,
};
use crate::knowledge::InterfaceKnowledge;
use crate::providers::{extract_json, GenerationRequest, ProviderError, Providers, Similarity, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GenerateOnly,
    HandbookOnly,
    Hybrid,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generate" | "generate_only" => Ok(Method::GenerateOnly),
            "handbook" | "handbook_only" => Ok(Method::HandbookOnly),
            "hybrid" => Ok(Method::Hybrid),
            other => Err(format!("unknown method {other:?} (expected generate, handbook or hybrid)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommenderConfig {
    pub k: usize,
    pub tau: Similarity,
    pub method: Method,
    /// Generation attempts for one fallback before giving up.
    pub fallback_attempts: usize,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self {
            k: 3,
            tau: 0.5,
            method: Method::Hybrid,
            fallback_attempts: 2,
        }
    }
}

impl RecommenderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be at least 1".into());
        }
        if !(-1.0..=1.0).contains(&self.tau) {
            return Err(format!("tau must lie in [-1, 1], got {}", self.tau));
        }
        if self.fallback_attempts == 0 {
            return Err("fallback_attempts must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommendationPath {
    Retrieved,
    Generated,
    /// Retrieval scored too low, generation failed, and the low-scoring
    /// retrievals are returned instead.
    FallbackFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub case: AssistanceCase,
    pub score: Option<Similarity>,
}

/// Per-stage wall-clock milliseconds. Stages are measured back to back, so
/// they add up to `total_ms`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub retrieval_ms: f64,
    pub generation_ms: f64,
    pub grounding_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationSet {
    pub query: String,
    pub candidates: Vec<Candidate>,
    pub path: RecommendationPath,
    pub timings: StageTimings,
    pub generation_calls: u64,
    pub top_score: Option<Similarity>,
    /// Id of the fallback case when it was stored in the handbook.
    pub persisted_case_id: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum RecommendError {
    #[error("challenge text is empty")]
    EmptyChallenge,
    #[error("element index {0} is not on the current page")]
    UnknownElementIndex(ElementIndex),
    #[error("no assistance available: {0}")]
    NoAssistanceAvailable(String),
    #[error("invalid recommender config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Handbook(#[from] HandbookError),
}

/// `"<challenge> | about: <target>, <target>"`; unchanged for an empty
/// selection.
pub fn user_element_hint(challenge: &str, selected: &[ElementIndex], elements: &[UiElement]) -> Result<String, RecommendError> {
    if selected.is_empty() {
        return Ok(challenge.to_string());
    }
    let mut about = Vec::with_capacity(selected.len());
    for &i in selected {
        let e = elements
            .iter()
            .find(|e| e.index == i)
            .ok_or(RecommendError::UnknownElementIndex(i))?;
        about.push(e.target_form());
    }
    Ok(format!("{challenge} | about: {}", about.join(", ")))
}

fn ms(from: Instant, to: Instant) -> f64 {
    (to - from).as_secs_f64() * 1000.0
}

#[derive(Debug)]
enum FallbackFailure {
    Provider(ProviderError),
    Rejected(RejectReason),
}

impl std::fmt::Display for FallbackFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FallbackFailure::Provider(e) => write!(f, "{e}"),
            FallbackFailure::Rejected(r) => write!(f, "generated case rejected: {r}"),
        }
    }
}

/// Generates one case for `query`, retrying malformed or invalid output.
/// Returns the case (without a final id) and the number of generation calls.
fn generate_case(
    query: &str,
    elements: &[UiElement],
    knowledge: &InterfaceKnowledge,
    attempts: usize,
    providers: &Providers,
) -> (Result<AssistanceCase, FallbackFailure>, u64) {
    let context = generation_context(knowledge, elements, query);
    let request = match GenerationRequest::new(TemplateId::FallbackCase, context) {
        Ok(r) => r,
        Err(e) => return (Err(FallbackFailure::Provider(e)), 0),
    };
    let mut calls = 0;
    let mut last = FallbackFailure::Provider(ProviderError::Unavailable("no attempt made".into()));
    for attempt in 0..attempts {
        calls += 1;
        let text = match providers.generate(&request) {
            Ok(t) => t,
            Err(e @ ProviderError::Unavailable(_)) => return (Err(FallbackFailure::Provider(e)), calls),
            Err(e) => {
                last = FallbackFailure::Provider(e);
                continue;
            }
        };
        let raw = match extract_json(&text) {
            Ok(Value::Array(mut items)) if !items.is_empty() => items.swap_remove(0),
            Ok(v) => v,
            Err(e) => {
                log::warn!("fallback attempt {attempt}: {e}");
                last = FallbackFailure::Provider(e);
                continue;
            }
        };
        match validate_case(&raw, elements) {
            Ok(valid) => {
                return (
                    Ok(valid.into_case(String::new(), CaseOrigin::FallbackGenerated)),
                    calls,
                )
            }
            Err(reason) => {
                log::warn!("fallback attempt {attempt} rejected: {reason}");
                last = FallbackFailure::Rejected(reason);
            }
        }
    }
    (Err(last), calls)
}

/// Runs one recommendation. `query` should already carry any element hint.
///
/// Hybrid: when the best retrieval strictly exceeds `tau` the retrieved
/// cases are returned and nothing is generated. Otherwise a case is
/// generated, stored in the handbook, and returned first, followed by the
/// best retrievals up to `k`.
pub fn recommend(
    query: &str,
    elements: &[UiElement],
    index: &RwLock<HandbookIndex>,
    knowledge: &InterfaceKnowledge,
    cfg: &RecommenderConfig,
    providers: &Providers,
) -> Result<RecommendationSet, RecommendError> {
    cfg.validate().map_err(RecommendError::InvalidConfig)?;
    if query.trim().is_empty() {
        return Err(RecommendError::EmptyChallenge);
    }
    let start = Instant::now();
    let retrieved: Vec<Candidate> = if cfg.method == Method::GenerateOnly {
        Vec::new()
    } else {
        index
            .read()
            .retrieve(query, cfg.k, providers)?
            .into_iter()
            .map(|s| Candidate {
                case: s.case,
                score: Some(s.score),
            })
            .collect()
    };
    let top_score = retrieved.first().and_then(|c| c.score);
    let after_retrieval = Instant::now();
    let mut timings = StageTimings {
        retrieval_ms: ms(start, after_retrieval),
        ..StageTimings::default()
    };
    let finish = |mut timings: StageTimings, end: Instant| {
        timings.total_ms = ms(start, end);
        timings
    };

    let reuse = match cfg.method {
        Method::HandbookOnly => true,
        Method::GenerateOnly => false,
        Method::Hybrid => top_score.is_some_and(|s| s > cfg.tau),
    };
    if reuse {
        if retrieved.is_empty() {
            return Err(RecommendError::NoAssistanceAvailable("the handbook is empty".into()));
        }
        return Ok(RecommendationSet {
            query: query.to_string(),
            candidates: retrieved,
            path: RecommendationPath::Retrieved,
            timings: finish(timings, after_retrieval),
            generation_calls: 0,
            top_score,
            persisted_case_id: None,
        });
    }

    let (generated, calls) = generate_case(query, elements, knowledge, cfg.fallback_attempts, providers);
    let after_generation = Instant::now();
    timings.generation_ms = ms(after_retrieval, after_generation);
    let mut case = match generated {
        Ok(case) => case,
        Err(failure) => {
            if retrieved.is_empty() {
                return Err(RecommendError::NoAssistanceAvailable(failure.to_string()));
            }
            log::warn!("fallback failed, returning low-scoring retrievals: {failure}");
            return Ok(RecommendationSet {
                query: query.to_string(),
                candidates: retrieved,
                path: RecommendationPath::FallbackFailed,
                timings: finish(timings, after_generation),
                generation_calls: calls,
                top_score,
                persisted_case_id: None,
            });
        }
    };

    let mut persisted_case_id = None;
    if cfg.method == Method::Hybrid {
        let mut idx = index.write();
        case.case_id = idx.next_id(CaseOrigin::FallbackGenerated);
        match idx.add_case(case.clone(), providers)? {
            AddOutcome::Added { case_id } => persisted_case_id = Some(case_id),
            AddOutcome::Duplicate { existing_id, similarity } => {
                log::info!("fallback case duplicates {existing_id} ({similarity:.3}); not stored");
            }
        }
    } else {
        case.case_id = format!("{}/g-{}", knowledge.interface_id, &crate::canonical::sha256_hex(query.as_bytes())[..12]);
    }
    let mut candidates = vec![Candidate { case, score: None }];
    candidates.extend(retrieved.into_iter().take(cfg.k.saturating_sub(1)));
    let end = Instant::now();
    Ok(RecommendationSet {
        query: query.to_string(),
        candidates,
        path: RecommendationPath::Generated,
        timings: finish(timings, end),
        generation_calls: calls,
        top_score,
        persisted_case_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom_model::Role;
    use crate::handbook::{ChallengeCategory, SubtypeId, UiTarget};
    use crate::providers::{MockEmbedder, MockGenerator, MockSearch};
    use serde_json::json;
    use std::sync::Arc;

    fn elements() -> Vec<UiElement> {
        ["Sort", "Filter", "Cylinders"]
            .iter()
            .enumerate()
            .map(|(i, l)| UiElement {
                index: i,
                node_id: i as u32 + 1,
                role: Role::Button,
                label: l.to_string(),
                section: String::new(),
                descriptor: format!("#{i} [button] {l}"),
            })
            .collect()
    }

    fn knowledge() -> InterfaceKnowledge {
        InterfaceKnowledge {
            interface_id: "ui".into(),
            page_title: "T".into(),
            page_url: "https://t.test/".into(),
            summary: "## What it is\nA test page.".into(),
            sources: vec![],
            degraded: true,
        }
    }

    fn case(id: &str, rationale: &str) -> AssistanceCase {
        AssistanceCase {
            case_id: id.into(),
            assistance: "Highlight [button] Sort".into(),
            rationale: rationale.into(),
            subtype: SubtypeId::MutateStyle,
            targets: vec![UiTarget::new("[button] Sort")],
            configuration: json!({"properties": {"outline": "2px solid red"}}),
            category: Some(ChallengeCategory::Where),
            feedback: 0,
            origin: CaseOrigin::HandbookGenerated,
        }
    }

    fn setup() -> (RwLock<HandbookIndex>, Providers) {
        let p = Providers::mock();
        let idx = HandbookIndex::build(
            "ui",
            vec![case("ui/h0000", "Users who cannot find the sort control"), case("ui/h0001", "Users who want fewer rows")],
            &p,
        )
        .unwrap();
        (RwLock::new(idx), p)
    }

    #[test]
    fn high_score_reuses_without_generation() {
        let (idx, p) = setup();
        let r = recommend("Users who cannot find the sort control", &elements(), &idx, &knowledge(), &RecommenderConfig::default(), &p).unwrap();
        assert_eq!(r.path, RecommendationPath::Retrieved);
        assert_eq!(r.generation_calls, 0);
        assert_eq!(p.calls().generate, 0);
        assert_eq!(r.candidates[0].score, Some(1.0));
    }

    #[test]
    fn low_score_generates_persists_and_self_retrieves() {
        let (idx, p) = setup();
        let challenge = "how do I change the cylinders encoding";
        let r = recommend(challenge, &elements(), &idx, &knowledge(), &RecommenderConfig::default(), &p).unwrap();
        assert_eq!(r.path, RecommendationPath::Generated);
        assert_eq!(r.generation_calls, 1);
        assert!(r.candidates.len() <= 3);
        assert_eq!(r.candidates[0].score, None);
        assert_eq!(r.persisted_case_id.as_deref(), Some("ui/f0002"));
        assert_eq!(idx.read().len(), 3);
        let again = recommend(challenge, &elements(), &idx, &knowledge(), &RecommenderConfig::default(), &p).unwrap();
        assert_eq!(again.path, RecommendationPath::Retrieved);
        assert_eq!(again.candidates[0].case.case_id, "ui/f0002");
    }

    #[test]
    fn threshold_is_strict() {
        let (idx, p) = setup();
        let query = "Users who cannot find the sort control";
        let cfg = RecommenderConfig { tau: 1.0, ..RecommenderConfig::default() };
        let r = recommend(query, &elements(), &idx, &knowledge(), &cfg, &p).unwrap();
        assert_eq!(r.top_score, Some(1.0));
        assert_eq!(r.path, RecommendationPath::Generated);
    }

    #[test]
    fn methods_are_isolated() {
        let (idx, p) = setup();
        let only = RecommenderConfig { method: Method::HandbookOnly, ..RecommenderConfig::default() };
        let r = recommend("zzz qqq", &elements(), &idx, &knowledge(), &only, &p).unwrap();
        assert_eq!(r.path, RecommendationPath::Retrieved);
        assert_eq!(p.calls().generate, 0);

        let before = p.calls();
        let gen = RecommenderConfig { method: Method::GenerateOnly, ..RecommenderConfig::default() };
        let r = recommend("Users who cannot find the sort control", &elements(), &idx, &knowledge(), &gen, &p).unwrap();
        assert_eq!(r.path, RecommendationPath::Generated);
        assert_eq!(r.candidates.len(), 1);
        let d = p.calls().since(&before);
        assert_eq!((d.retrieve, d.generate), (0, 1));
        assert_eq!(idx.read().len(), 2);
    }

    #[test]
    fn generation_outage() {
        let p = Providers::new(Arc::new(MockEmbedder::new()), Arc::new(MockGenerator::unavailable()), Arc::new(MockSearch::new()));
        let idx = RwLock::new(HandbookIndex::empty("ui"));
        assert!(matches!(
            recommend("help", &elements(), &idx, &knowledge(), &RecommenderConfig::default(), &p),
            Err(RecommendError::NoAssistanceAvailable(_))
        ));
        let idx = RwLock::new(HandbookIndex::build("ui", vec![case("ui/h0000", "Users who want fewer rows")], &p).unwrap());
        let r = recommend("zzz", &elements(), &idx, &knowledge(), &RecommenderConfig::default(), &p).unwrap();
        assert_eq!(r.path, RecommendationPath::FallbackFailed);
    }

    #[test]
    fn element_hint() {
        let e = elements();
        assert_eq!(user_element_hint("what is this", &[2], &e).unwrap(), "what is this | about: [button] Cylinders");
        assert_eq!(user_element_hint("what is this", &[], &e).unwrap(), "what is this");
        assert!(matches!(user_element_hint("x", &[999], &e), Err(RecommendError::UnknownElementIndex(999))));
    }

    #[test]
    fn timings_add_up() {
        let (idx, p) = setup();
        let r = recommend("something new entirely", &elements(), &idx, &knowledge(), &RecommenderConfig::default(), &p).unwrap();
        let t = r.timings;
        assert!((t.retrieval_ms + t.generation_ms + t.grounding_ms - t.total_ms).abs() <= 5.0);
    }
}
