//! The assistance service without its transport: interface builds, assist
//! requests, feedback and handbook export. The HTTP server and the CLI are
//! thin wrappers around [`Engine`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::delivery::{apply_sim, compile_plan, DeliveryPlan, ReversalRecord};
use crate::dom_model::{extract_interactables, DomSnapshot, ElementIndex};
use crate::grounding::{cache_element_embeddings, ground_case, ElementEmbeddings, GroundingError, UnresolvedTarget};
use crate::handbook::{generate_handbook, interface_of, AssistanceCase, HandbookError, HandbookIndex};
use crate::knowledge::{build_knowledge, interface_id, InterfaceKnowledge, KnowledgeError};
use crate::providers::{CallCounts, ProviderError, Providers, Similarity};
use crate::recommender::{recommend, user_element_hint, Method, RecommendError, RecommendationPath, RecommenderConfig};

const KNOWLEDGE_FILE: &str = "knowledge.json";
const HANDBOOK_FILE: &str = "handbook.json";
/// Element tables kept per interface before the cache is cleared.
const ELEMENT_CACHE_LIMIT: usize = 32;
/// Extra retrievals fetched per failed candidate when looking for
/// replacements.
const REPLACEMENT_SLACK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceStatus {
    Building,
    Ready,
    Degraded,
    Failed,
}

impl InterfaceStatus {
    pub fn is_usable(&self) -> bool {
        matches!(self, InterfaceStatus::Ready | InterfaceStatus::Degraded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitResponse {
    pub job_id: String,
    pub interface_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusResponse {
    pub status: InterfaceStatus,
    pub handbook_size: usize,
    pub degraded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssistRequest {
    pub interface_id: String,
    #[serde(default)]
    pub session_id: Option<String>,
    pub challenge: String,
    pub snapshot: DomSnapshot,
    #[serde(default)]
    pub selected_elements: Vec<ElementIndex>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePath {
    Retrieved,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveredCandidate {
    pub case: AssistanceCase,
    pub plan: DeliveryPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<Similarity>,
    pub path: CandidatePath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Grounding,
    Compile,
    Apply,
}

/// Why a recommended candidate was dropped from the response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDiagnostic {
    pub case_id: String,
    /// Position in the recommendation order, replacements included.
    pub rank: usize,
    pub stage: FailureStage,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unresolved: Vec<UnresolvedTarget>,
}

/// Milliseconds per stage. `total_ms` is measured end to end and the other
/// fields add up to it apart from bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AssistTimings {
    pub retrieval_ms: f64,
    pub generation_ms: f64,
    pub grounding_ms: f64,
    pub compile_ms: f64,
    pub total_ms: f64,
}

impl AssistTimings {
    pub fn stage_sum(&self) -> f64 {
        self.retrieval_ms + self.generation_ms + self.grounding_ms + self.compile_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistResponse {
    pub session_id: String,
    pub candidates: Vec<DeliveredCandidate>,
    pub timings: AssistTimings,
    pub path: RecommendationPath,
    pub top_score: Option<Similarity>,
    pub generation_calls: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<CandidateDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub case_id: String,
    pub rating: i64,
    #[serde(default)]
    pub session_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub case_id: String,
    pub feedback: i64,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("unknown interface {0}")]
    UnknownInterface(String),
    #[error("interface {id} is not ready (status {status:?})")]
    InterfaceNotReady { id: String, status: InterfaceStatus },
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("no assistance available: {reason}")]
    NoAssistanceAvailable {
        reason: String,
        diagnostics: Vec<CandidateDiagnostic>,
    },
    #[error("unknown case id {0}")]
    UnknownCaseId(String),
    #[error("build failed for {id}: {cause}")]
    BuildFailed { id: String, cause: String },
    #[error("provider error: {0}")]
    Provider(#[from] ProviderError),
    #[error("handbook error: {0}")]
    Handbook(HandbookError),
    #[error("knowledge error: {0}")]
    Knowledge(#[from] KnowledgeError),
}

impl EngineError {
    /// HTTP status the service answers with.
    pub fn http_status(&self) -> u16 {
        match self {
            EngineError::UnknownInterface(_) | EngineError::UnknownCaseId(_) => 404,
            EngineError::InterfaceNotReady { .. } => 409,
            EngineError::BadRequest(_) => 400,
            EngineError::NoAssistanceAvailable { .. } => 422,
            EngineError::Provider(_) => 502,
            EngineError::Handbook(HandbookError::InvalidRating(_)) => 400,
            EngineError::BuildFailed { .. } | EngineError::Handbook(_) | EngineError::Knowledge(_) => 500,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EngineError::UnknownInterface(_) => "UnknownInterface",
            EngineError::InterfaceNotReady { .. } => "InterfaceNotReady",
            EngineError::BadRequest(_) => "BadRequest",
            EngineError::NoAssistanceAvailable { .. } => "NoAssistanceAvailable",
            EngineError::UnknownCaseId(_) => "UnknownCaseId",
            EngineError::BuildFailed { .. } => "BuildFailed",
            EngineError::Provider(_) => "ProviderError",
            EngineError::Handbook(HandbookError::InvalidRating(_)) => "InvalidRating",
            EngineError::Handbook(_) => "HandbookError",
            EngineError::Knowledge(_) => "KnowledgeError",
        }
    }
}

impl From<HandbookError> for EngineError {
    fn from(e: HandbookError) -> Self {
        match e {
            HandbookError::UnknownCaseId(id) => EngineError::UnknownCaseId(id),
            other => EngineError::Handbook(other),
        }
    }
}

impl From<RecommendError> for EngineError {
    fn from(e: RecommendError) -> Self {
        match e {
            RecommendError::EmptyChallenge | RecommendError::UnknownElementIndex(_) => {
                EngineError::BadRequest(e.to_string())
            }
            RecommendError::InvalidConfig(m) => EngineError::BadRequest(m),
            RecommendError::NoAssistanceAvailable(reason) => EngineError::NoAssistanceAvailable {
                reason,
                diagnostics: Vec::new(),
            },
            RecommendError::Handbook(h) => h.into(),
        }
    }
}

struct BuildState {
    status: InterfaceStatus,
    job_id: String,
    error: Option<String>,
    knowledge: Option<Arc<InterfaceKnowledge>>,
}

struct InterfaceState {
    id: String,
    build: RwLock<BuildState>,
    handbook: RwLock<HandbookIndex>,
    /// Element embeddings keyed by snapshot digest.
    elements: Mutex<HashMap<String, Arc<ElementEmbeddings>>>,
    /// Serializes handbook mutations with the file writes that follow them.
    writer: Mutex<()>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub interface_id: String,
    pub latest_snapshot_digest: String,
    /// Plans handed to the client, by plan id.
    pub delivered: BTreeMap<String, ReversalRecord>,
    pub created_at: DateTime<Utc>,
    next_plan: u64,
}

struct Inner {
    cfg: EngineConfig,
    providers: Providers,
    interfaces: RwLock<HashMap<String, Arc<InterfaceState>>>,
    sessions: Mutex<HashMap<String, Session>>,
    jobs: AtomicU64,
}

#[derive(Clone)]
pub struct Engine {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("data_dir", &self.inner.cfg.data_dir).finish()
    }
}

fn ms(from: Instant, to: Instant) -> f64 {
    to.duration_since(from).as_secs_f64() * 1000.0
}

fn new_session_id() -> String {
    format!("s{:016x}", rand::random::<u64>())
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Result<Self, EngineError> {
        let providers = cfg.providers.build()?;
        Ok(Self::with_providers(cfg, providers))
    }

    pub fn with_providers(cfg: EngineConfig, providers: Providers) -> Self {
        Self {
            inner: Arc::new(Inner {
                cfg,
                providers,
                interfaces: RwLock::new(HashMap::new()),
                sessions: Mutex::new(HashMap::new()),
                jobs: AtomicU64::new(0),
            }),
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.inner.cfg
    }

    pub fn providers(&self) -> &Providers {
        &self.inner.providers
    }

    pub fn calls(&self) -> CallCounts {
        self.inner.providers.calls()
    }

    fn interface_dir(&self, id: &str) -> PathBuf {
        self.inner.cfg.interface_dir(id)
    }

    fn state(&self, id: &str) -> Result<Arc<InterfaceState>, EngineError> {
        self.inner
            .interfaces
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| EngineError::UnknownInterface(id.to_string()))
    }

    /// Starts building knowledge and handbook for the snapshot's interface
    /// in the background. Repeated calls return the existing job unless the
    /// previous build failed.
    pub fn init_interface(&self, snapshot: &DomSnapshot) -> Result<InitResponse, EngineError> {
        let (state, fresh) = self.claim(snapshot)?;
        let job_id = state.build.read().job_id.clone();
        if fresh {
            let engine = self.clone();
            let snapshot = snapshot.clone();
            let st = state.clone();
            thread::Builder::new()
                .name(format!("build-{}", state.id))
                .spawn(move || engine.run_build(&st, &snapshot))
                .map_err(|e| EngineError::BuildFailed {
                    id: state.id.clone(),
                    cause: e.to_string(),
                })?;
        }
        Ok(InitResponse {
            job_id,
            interface_id: state.id.clone(),
        })
    }

    /// Like [`Engine::init_interface`] but builds on the calling thread.
    pub fn init_interface_blocking(&self, snapshot: &DomSnapshot) -> Result<StatusResponse, EngineError> {
        let (state, fresh) = self.claim(snapshot)?;
        if fresh {
            self.run_build(&state, snapshot);
        } else if state.build.read().status == InterfaceStatus::Building {
            return self.wait_for(&state.id, Duration::from_secs(3600));
        }
        let status = self.status(&state.id)?;
        if status.status == InterfaceStatus::Failed {
            return Err(EngineError::BuildFailed {
                id: state.id.clone(),
                cause: status.error.unwrap_or_default(),
            });
        }
        Ok(status)
    }

    /// Registers the interface, reusing memory or disk state when present.
    /// Returns true when the caller must run the build.
    fn claim(&self, snapshot: &DomSnapshot) -> Result<(Arc<InterfaceState>, bool), EngineError> {
        snapshot
            .validate_graph()
            .map_err(|e| EngineError::BadRequest(e.to_string()))?;
        let id = interface_id(&snapshot.url)?;
        let mut map = self.inner.interfaces.write();
        if let Some(existing) = map.get(&id) {
            let mut build = existing.build.write();
            if build.status != InterfaceStatus::Failed {
                return Ok((existing.clone(), false));
            }
            build.status = InterfaceStatus::Building;
            build.error = None;
            build.job_id = self.next_job(&id);
            drop(build);
            return Ok((existing.clone(), true));
        }
        if let Some(loaded) = self.load_persisted(&id) {
            let state = Arc::new(loaded);
            map.insert(id, state.clone());
            return Ok((state, false));
        }
        let state = Arc::new(InterfaceState {
            id: id.clone(),
            build: RwLock::new(BuildState {
                status: InterfaceStatus::Building,
                job_id: self.next_job(&id),
                error: None,
                knowledge: None,
            }),
            handbook: RwLock::new(HandbookIndex::empty(id.clone())),
            elements: Mutex::new(HashMap::new()),
            writer: Mutex::new(()),
        });
        map.insert(id, state.clone());
        Ok((state, true))
    }

    fn next_job(&self, id: &str) -> String {
        format!("build-{id}-{}", self.inner.jobs.fetch_add(1, Ordering::SeqCst) + 1)
    }

    fn load_persisted(&self, id: &str) -> Option<InterfaceState> {
        if !self.inner.cfg.persist {
            return None;
        }
        let dir = self.interface_dir(id);
        let (kp, hp) = (dir.join(KNOWLEDGE_FILE), dir.join(HANDBOOK_FILE));
        if !kp.is_file() || !hp.is_file() {
            return None;
        }
        let loaded = InterfaceKnowledge::load(&kp)
            .map_err(|e| e.to_string())
            .and_then(|k| HandbookIndex::load(&hp).map(|h| (k, h)).map_err(|e| e.to_string()));
        let (knowledge, handbook) = match loaded {
            Ok(pair) => pair,
            Err(e) => {
                log::warn!("ignoring stored state for {id}: {e}");
                return None;
            }
        };
        log::info!("loaded interface {id} with {} cases from {}", handbook.len(), dir.display());
        Some(InterfaceState {
            id: id.to_string(),
            build: RwLock::new(BuildState {
                status: if knowledge.degraded {
                    InterfaceStatus::Degraded
                } else {
                    InterfaceStatus::Ready
                },
                job_id: format!("stored-{id}"),
                error: None,
                knowledge: Some(Arc::new(knowledge)),
            }),
            handbook: RwLock::new(handbook),
            elements: Mutex::new(HashMap::new()),
            writer: Mutex::new(()),
        })
    }

    fn run_build(&self, state: &InterfaceState, snapshot: &DomSnapshot) {
        let started = Instant::now();
        match self.build(state, snapshot) {
            Ok(status) => {
                log::info!(
                    "interface {} {:?} with {} cases in {:.0} ms",
                    state.id,
                    status,
                    state.handbook.read().len(),
                    started.elapsed().as_secs_f64() * 1000.0
                );
            }
            Err(cause) => {
                log::error!("build of interface {} failed: {cause}", state.id);
                let mut b = state.build.write();
                b.status = InterfaceStatus::Failed;
                b.error = Some(cause.to_string());
            }
        }
    }

    fn build(&self, state: &InterfaceState, snapshot: &DomSnapshot) -> Result<InterfaceStatus, EngineError> {
        let providers = &self.inner.providers;
        let elements = extract_interactables(snapshot);
        let knowledge = build_knowledge(snapshot, &elements, providers)?;
        let generated = generate_handbook(&knowledge, &elements, self.inner.cfg.handbook_size, providers)?;
        if !generated.rejections.is_empty() {
            log::warn!(
                "interface {}: {} handbook candidates rejected",
                state.id,
                generated.rejections.len()
            );
        }
        let index = HandbookIndex::build(state.id.clone(), generated.cases, providers)?;
        let _w = state.writer.lock();
        if self.inner.cfg.persist {
            let dir = self.interface_dir(&state.id);
            knowledge.save(&dir.join(KNOWLEDGE_FILE))?;
            index.save(&dir.join(HANDBOOK_FILE))?;
        }
        *state.handbook.write() = index;
        let status = if knowledge.degraded {
            InterfaceStatus::Degraded
        } else {
            InterfaceStatus::Ready
        };
        let mut b = state.build.write();
        b.knowledge = Some(Arc::new(knowledge));
        b.status = status;
        Ok(status)
    }

    pub fn status(&self, id: &str) -> Result<StatusResponse, EngineError> {
        let state = self.state(id)?;
        let handbook_size = state.handbook.read().len();
        let b = state.build.read();
        let response = StatusResponse {
            status: b.status,
            handbook_size,
            degraded: b.knowledge.as_ref().is_some_and(|k| k.degraded),
            error: b.error.clone(),
        };
        Ok(response)
    }

    /// Polls until the interface leaves `building` or the timeout passes.
    pub fn wait_for(&self, id: &str, timeout: Duration) -> Result<StatusResponse, EngineError> {
        let deadline = Instant::now() + timeout;
        loop {
            let s = self.status(id)?;
            if s.status != InterfaceStatus::Building || Instant::now() >= deadline {
                return Ok(s);
            }
            thread::sleep(Duration::from_millis(5));
        }
    }

    pub fn knowledge(&self, id: &str) -> Result<Arc<InterfaceKnowledge>, EngineError> {
        let state = self.state(id)?;
        let b = state.build.read();
        b.knowledge.clone().ok_or(EngineError::InterfaceNotReady {
            id: id.to_string(),
            status: b.status,
        })
    }

    pub fn handbook_len(&self, id: &str) -> Result<usize, EngineError> {
        Ok(self.state(id)?.handbook.read().len())
    }

    /// Canonical handbook document.
    pub fn export_handbook(&self, id: &str) -> Result<String, EngineError> {
        let state = self.state(id)?;
        let status = state.build.read().status;
        if !status.is_usable() {
            return Err(EngineError::InterfaceNotReady {
                id: id.to_string(),
                status,
            });
        }
        let json = state.handbook.read().to_canonical_json();
        Ok(json)
    }

    pub fn session(&self, session_id: &str) -> Option<Session> {
        self.inner.sessions.lock().get(session_id).cloned()
    }

    pub fn assist(&self, request: &AssistRequest) -> Result<AssistResponse, EngineError> {
        self.assist_with(request, self.inner.cfg.recommender)
    }

    /// Runs one assist request with an explicit recommender configuration.
    pub fn assist_with(&self, request: &AssistRequest, rcfg: RecommenderConfig) -> Result<AssistResponse, EngineError> {
        let start = Instant::now();
        let providers = &self.inner.providers;
        let state = self.state(&request.interface_id)?;
        let knowledge = {
            let b = state.build.read();
            match (&b.knowledge, b.status.is_usable()) {
                (Some(k), true) => k.clone(),
                _ => {
                    return Err(EngineError::InterfaceNotReady {
                        id: state.id.clone(),
                        status: b.status,
                    })
                }
            }
        };
        let snapshot = &request.snapshot;
        snapshot
            .validate_graph()
            .map_err(|e| EngineError::BadRequest(e.to_string()))?;
        let snapshot_iface = interface_id(&snapshot.url)?;
        if snapshot_iface != state.id {
            return Err(EngineError::BadRequest(format!(
                "snapshot url {} belongs to interface {snapshot_iface}, not {}",
                snapshot.url, state.id
            )));
        }
        let (session_id, plan_base) = self.open_session(request.session_id.as_deref(), &state.id, snapshot)?;

        let mut timings = AssistTimings::default();
        let t = Instant::now();
        let table = self.element_table(&state, snapshot)?;
        timings.grounding_ms += ms(t, Instant::now());

        let query = user_element_hint(&request.challenge, &request.selected_elements, table.elements())?;
        let set = recommend(&query, table.elements(), &state.handbook, &knowledge, &rcfg, providers)?;
        timings.retrieval_ms += set.timings.retrieval_ms;
        timings.generation_ms += set.timings.generation_ms;
        if set.persisted_case_id.is_some() {
            self.persist_handbook(&state)?;
        }

        let mut queue: Vec<(AssistanceCase, Option<Similarity>, CandidatePath)> = set
            .candidates
            .iter()
            .map(|c| {
                let path = if c.score.is_none() {
                    CandidatePath::Generated
                } else {
                    CandidatePath::Retrieved
                };
                (c.case.clone(), c.score, path)
            })
            .collect();
        let mut seen: HashSet<String> = queue.iter().map(|c| c.0.case_id.clone()).collect();
        let mut delivered = Vec::new();
        let mut rejected = Vec::new();
        let mut records = Vec::new();
        let mut rank = 0;
        let mut refilled = rcfg.method == Method::GenerateOnly;
        while delivered.len() < rcfg.k {
            if rank == queue.len() {
                if refilled || rejected.is_empty() {
                    break;
                }
                // Next-ranked retrievals stand in for the failed candidates.
                refilled = true;
                let t = Instant::now();
                let want = rcfg.k + rejected.len() * REPLACEMENT_SLACK + queue.len();
                let more = state.handbook.read().retrieve(&query, want, providers)?;
                timings.retrieval_ms += ms(t, Instant::now());
                for s in more {
                    if seen.insert(s.case.case_id.clone()) {
                        queue.push((s.case, Some(s.score), CandidatePath::Retrieved));
                    }
                }
                continue;
            }
            let (case, score, path) = queue[rank].clone();
            let plan_id = format!("{session_id}-{}", plan_base + delivered.len() as u64 + rejected.len() as u64);
            match self.deliver(&case, &table, snapshot, &plan_id, &mut timings) {
                Ok((plan, record)) => {
                    records.push(record);
                    delivered.push(DeliveredCandidate { case, plan, score, path });
                }
                Err((stage, reason, unresolved)) => {
                    log::info!("candidate {} dropped at {stage:?}: {reason}", case.case_id);
                    rejected.push(CandidateDiagnostic {
                        case_id: case.case_id.clone(),
                        rank,
                        stage,
                        reason,
                        unresolved,
                    });
                }
            }
            rank += 1;
        }
        self.close_session(&session_id, records);
        if delivered.is_empty() {
            return Err(EngineError::NoAssistanceAvailable {
                reason: format!("all {} candidates failed grounding or compilation", rejected.len()),
                diagnostics: rejected,
            });
        }
        timings.total_ms = ms(start, Instant::now());
        Ok(AssistResponse {
            session_id,
            candidates: delivered,
            timings,
            path: set.path,
            top_score: set.top_score,
            generation_calls: set.generation_calls,
            rejected,
        })
    }

    #[allow(clippy::type_complexity)]
    fn deliver(
        &self,
        case: &AssistanceCase,
        table: &ElementEmbeddings,
        snapshot: &DomSnapshot,
        plan_id: &str,
        timings: &mut AssistTimings,
    ) -> Result<(DeliveryPlan, ReversalRecord), (FailureStage, String, Vec<UnresolvedTarget>)> {
        let t = Instant::now();
        let grounded = ground_case(case, table, &self.inner.cfg.grounding, &self.inner.providers);
        let t2 = Instant::now();
        timings.grounding_ms += ms(t, t2);
        let grounded = grounded.map_err(|e| match e {
            GroundingError::UnresolvedTargets(u) => {
                let reason = GroundingError::UnresolvedTargets(u.clone()).to_string();
                (FailureStage::Grounding, reason, u)
            }
            GroundingError::EmptyElements => {
                let every = case
                    .targets
                    .iter()
                    .map(|t| UnresolvedTarget {
                        ui_description: t.ui_description.clone(),
                        best_similarity: None,
                    })
                    .collect();
                (FailureStage::Grounding, GroundingError::EmptyElements.to_string(), every)
            }
            other => (FailureStage::Grounding, other.to_string(), Vec::new()),
        });
        let out = grounded.and_then(|g| {
            let plan = compile_plan(case, &g, snapshot, plan_id).map_err(|e| (FailureStage::Compile, e.to_string(), Vec::new()))?;
            let (_, record) = apply_sim(snapshot, &plan).map_err(|e| (FailureStage::Apply, e.to_string(), Vec::new()))?;
            Ok((plan, record))
        });
        timings.compile_ms += ms(t2, Instant::now());
        out
    }

    fn element_table(&self, state: &InterfaceState, snapshot: &DomSnapshot) -> Result<Arc<ElementEmbeddings>, EngineError> {
        let digest = snapshot.digest();
        if let Some(t) = state.elements.lock().get(&digest) {
            return Ok(t.clone());
        }
        let elements = extract_interactables(snapshot);
        let table = Arc::new(cache_element_embeddings(&elements, &self.inner.providers)?);
        let mut cache = state.elements.lock();
        if cache.len() >= ELEMENT_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(digest, table.clone());
        Ok(table)
    }

    /// Returns the session id and the first free plan number.
    fn open_session(&self, requested: Option<&str>, iface: &str, snapshot: &DomSnapshot) -> Result<(String, u64), EngineError> {
        let mut sessions = self.inner.sessions.lock();
        let id = match requested {
            Some(id) => {
                if id.is_empty() || id.len() > 128 || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                    return Err(EngineError::BadRequest(format!(
                        "session id {id:?} must be 1-128 ASCII letters, digits, '-' or '_'"
                    )));
                }
                id.to_string()
            }
            None => loop {
                let id = new_session_id();
                if !sessions.contains_key(&id) {
                    break id;
                }
            },
        };
        let session = sessions.entry(id.clone()).or_insert_with(|| Session {
            session_id: id.clone(),
            interface_id: iface.to_string(),
            latest_snapshot_digest: String::new(),
            delivered: BTreeMap::new(),
            created_at: Utc::now(),
            next_plan: 0,
        });
        if session.interface_id != iface {
            return Err(EngineError::BadRequest(format!(
                "session {id} belongs to interface {}",
                session.interface_id
            )));
        }
        session.latest_snapshot_digest = snapshot.digest();
        let base = session.next_plan;
        // Reserve generously so concurrent requests on one session never
        // share plan ids.
        session.next_plan += 1024;
        Ok((id, base))
    }

    fn close_session(&self, id: &str, records: Vec<ReversalRecord>) {
        if let Some(s) = self.inner.sessions.lock().get_mut(id) {
            for r in records {
                s.delivered.insert(r.plan_id.clone(), r);
            }
        }
    }

    fn persist_handbook(&self, state: &InterfaceState) -> Result<(), EngineError> {
        if !self.inner.cfg.persist {
            return Ok(());
        }
        let _w = state.writer.lock();
        let path = self.interface_dir(&state.id).join(HANDBOOK_FILE);
        let index = state.handbook.read();
        index.save(&path)?;
        Ok(())
    }

    pub fn feedback(&self, request: &FeedbackRequest) -> Result<FeedbackResponse, EngineError> {
        let iface = interface_of(&request.case_id).ok_or_else(|| EngineError::UnknownCaseId(request.case_id.clone()))?;
        let state = self
            .inner
            .interfaces
            .read()
            .get(iface)
            .cloned()
            .ok_or_else(|| EngineError::UnknownCaseId(request.case_id.clone()))?;
        let _w = state.writer.lock();
        let tally = state.handbook.write().record_feedback(&request.case_id, request.rating)?;
        if self.inner.cfg.persist {
            let path = self.interface_dir(&state.id).join(HANDBOOK_FILE);
            state.handbook.read().save(&path)?;
        }
        Ok(FeedbackResponse {
            case_id: request.case_id.clone(),
            feedback: tally,
        })
    }
}
