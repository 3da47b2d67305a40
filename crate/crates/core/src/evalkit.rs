//! Offline evaluation: runs a challenge dataset through one recommendation
//! method and reports success rate, latency, fallback rate and optional
//! judge scores.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Instant;

use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dom_model::{parse_snapshot, DomSnapshot};
use crate::engine::{AssistRequest, AssistResponse, Engine, EngineError};
use crate::handbook::ChallengeCategory;
use crate::knowledge::interface_id;
use crate::providers::{extract_json, CallCounts, GenerationRequest, ProviderError, Providers, TemplateId};
use crate::recommender::{Method, RecommendationPath, RecommenderConfig};

pub const SCORE_MIN: f64 = 0.0;
pub const SCORE_MAX: f64 = 10.0;
/// Judge attempts per record before the score is left absent.
pub const JUDGE_ATTEMPTS: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dataset schema error: {0}")]
    Schema(String),
    #[error("dataset has no records")]
    NoRecords,
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub record_id: String,
    pub interface_id: String,
    pub category: ChallengeCategory,
    pub challenge: String,
    /// Relative paths are resolved against the dataset file on load.
    pub snapshot_path: PathBuf,
    pub reference_assistance: String,
}

fn schema(line: usize, record: Option<&str>, msg: impl std::fmt::Display) -> EvalError {
    match record {
        Some(id) => EvalError::Schema(format!("line {line}, record {id:?}: {msg}")),
        None => EvalError::Schema(format!("line {line}: {msg}")),
    }
}

/// Reads a JSONL dataset. Every snapshot is parsed and must belong to the
/// record's interface.
pub fn load_dataset(path: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    let raw = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = BTreeSet::new();
    let mut parsed: HashMap<PathBuf, String> = HashMap::new();
    let mut records = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: EvalRecord = serde_json::from_str(line).map_err(|e| schema(line_no, None, e))?;
        let id = record.record_id.clone();
        let fail = |msg: String| schema(line_no, Some(&id), msg);
        if id.trim().is_empty() {
            return Err(fail("record_id is empty".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(fail("duplicate record_id".into()));
        }
        if record.challenge.trim().is_empty() {
            return Err(fail("challenge is empty".into()));
        }
        if record.snapshot_path.is_relative() {
            record.snapshot_path = base.join(&record.snapshot_path);
        }
        let snap_iface = match parsed.get(&record.snapshot_path) {
            Some(iface) => iface.clone(),
            None => {
                let text = fs::read_to_string(&record.snapshot_path)
                    .map_err(|e| fail(format!("snapshot {}: {e}", record.snapshot_path.display())))?;
                let snapshot = parse_snapshot(&text)
                    .map_err(|e| fail(format!("snapshot {}: {e}", record.snapshot_path.display())))?;
                let iface = interface_id(&snapshot.url).map_err(|e| fail(e.to_string()))?;
                parsed.insert(record.snapshot_path.clone(), iface.clone());
                iface
            }
        };
        if snap_iface != record.interface_id {
            return Err(fail(format!(
                "interface_id {} does not match the snapshot's interface {snap_iface}",
                record.interface_id
            )));
        }
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub method: Method,
    pub seed: u64,
    pub judge: bool,
    /// Worker threads for methods that never write to the handbook.
    pub parallelism: usize,
    /// `k`, `tau` and retry settings; the method field is overridden.
    pub recommender: RecommenderConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            method: Method::Hybrid,
            seed: 0,
            judge: false,
            parallelism: 8,
            recommender: RecommenderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

/// Nearest-rank percentile on sorted values.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = if sorted.is_empty() {
            0.0
        } else {
            sorted.iter().sum::<f64>() / sorted.len() as f64
        };
        Self {
            mean,
            p50: percentile(&sorted, 50.0),
            p95: percentile(&sorted, 95.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub record_id: String,
    pub category: ChallengeCategory,
    pub success: bool,
    pub latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<RecommendationPath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_score: Option<f64>,
    /// Case behind the rank-0 candidate when it was delivered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    /// Mean over records that received a score.
    pub mean: Option<f64>,
    pub scores: BTreeMap<String, Option<f64>>,
    /// Scores that fell outside [0, 10] and were clamped.
    pub clamped: usize,
    pub judge_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub seed: u64,
    pub n_records: usize,
    pub success_rate: f64,
    pub latency_ms: LatencyStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Resolution>,
    /// Calls made while assisting, builds and judging excluded.
    pub provider_calls: CallCounts,
    pub records: Vec<RecordOutcome>,
}

impl EvalReport {
    /// The report with every wall-clock field zeroed, for comparing runs.
    pub fn without_latency(&self) -> EvalReport {
        let mut r = self.clone();
        r.latency_ms = LatencyStats {
            mean: 0.0,
            p50: 0.0,
            p95: 0.0,
        };
        for rec in &mut r.records {
            rec.latency_ms = 0.0;
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub score: Option<f64>,
    pub reasoning: String,
    pub clamped: bool,
}

fn parse_verdict(text: &str) -> Result<(f64, String), ProviderError> {
    let v = extract_json(text)?;
    let score = match &v["score"] {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .filter(|s: &f64| s.is_finite())
    .ok_or_else(|| ProviderError::MalformedResponse(format!("no numeric score in {v}")))?;
    let reasoning = v["reasoning"].as_str().unwrap_or_default().to_string();
    Ok((score, reasoning))
}

/// Scores one candidate against the reference. Malformed output is retried
/// once and then leaves the score absent; an unavailable provider is an
/// error.
pub fn judge_resolution(
    challenge: &str,
    candidate_assistance: &str,
    reference: &str,
    interface_name: &str,
    providers: &Providers,
) -> Result<JudgeVerdict, ProviderError> {
    let context: BTreeMap<String, String> = [
        ("user_need", challenge),
        ("interface_name", interface_name),
        ("generated_assistance", candidate_assistance),
        ("annotated_assistance", reference),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    let request = GenerationRequest::new(TemplateId::Judge, context)?;
    for attempt in 1..=JUDGE_ATTEMPTS {
        let parsed = providers.generate(&request).and_then(|t| parse_verdict(&t));
        match parsed {
            Ok((raw, reasoning)) => {
                let score = raw.clamp(SCORE_MIN, SCORE_MAX);
                let clamped = score != raw;
                if clamped {
                    log::warn!("judge score {raw} outside [{SCORE_MIN}, {SCORE_MAX}], clamped to {score}");
                }
                return Ok(JudgeVerdict {
                    score: Some(score),
                    reasoning,
                    clamped,
                });
            }
            Err(ProviderError::MalformedResponse(m)) => {
                log::warn!("judge attempt {attempt} malformed: {m}");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(JudgeVerdict {
        score: None,
        reasoning: String::new(),
        clamped: false,
    })
}

struct Prepared {
    record: EvalRecord,
    snapshot: DomSnapshot,
    /// Set when the interface could not be built.
    build_error: Option<String>,
}

struct Attempt {
    outcome: RecordOutcome,
    assistance: Option<String>,
}

fn attempt(engine: &Engine, p: &Prepared, rcfg: RecommenderConfig) -> Attempt {
    let record = &p.record;
    let mut outcome = RecordOutcome {
        record_id: record.record_id.clone(),
        category: record.category,
        success: false,
        latency_ms: 0.0,
        path: None,
        top_score: None,
        case_id: None,
        error: None,
    };
    if let Some(e) = &p.build_error {
        outcome.error = Some(e.clone());
        return Attempt {
            outcome,
            assistance: None,
        };
    }
    let request = AssistRequest {
        interface_id: record.interface_id.clone(),
        session_id: None,
        challenge: record.challenge.clone(),
        snapshot: p.snapshot.clone(),
        selected_elements: Vec::new(),
    };
    let start = Instant::now();
    let result: Result<AssistResponse, EngineError> = engine.assist_with(&request, rcfg);
    outcome.latency_ms = start.elapsed().as_secs_f64() * 1000.0;
    let mut assistance = None;
    match result {
        Ok(r) => {
            outcome.path = Some(r.path);
            outcome.top_score = r.top_score;
            let first_ok = r.rejected.iter().all(|d| d.rank != 0);
            if first_ok {
                let best = &r.candidates[0];
                outcome.success = true;
                outcome.case_id = Some(best.case.case_id.clone());
                assistance = Some(best.case.assistance.clone());
            } else {
                outcome.error = r.rejected.iter().find(|d| d.rank == 0).map(|d| d.reason.clone());
            }
        }
        Err(e) => outcome.error = Some(e.to_string()),
    }
    Attempt { outcome, assistance }
}

/// Evaluates `records` with one method. Interfaces are built before the
/// measured phase; records run in a seeded order, and concurrently for
/// methods that never write to the handbook.
pub fn run_eval(engine: &Engine, records: &[EvalRecord], cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut snapshots: HashMap<PathBuf, DomSnapshot> = HashMap::new();
    let mut build_errors: HashMap<String, String> = HashMap::new();
    let mut prepared = Vec::with_capacity(records.len());
    for record in records {
        if !snapshots.contains_key(&record.snapshot_path) {
            let text = fs::read_to_string(&record.snapshot_path).map_err(|source| EvalError::Io {
                path: record.snapshot_path.clone(),
                source,
            })?;
            let snapshot = parse_snapshot(&text).map_err(|e| {
                EvalError::Schema(format!("record {:?}: {e}", record.record_id))
            })?;
            snapshots.insert(record.snapshot_path.clone(), snapshot);
        }
        let snapshot = snapshots[&record.snapshot_path].clone();
        if !build_errors.contains_key(&record.interface_id) && engine.status(&record.interface_id).is_err() {
            if let Err(e) = engine.init_interface_blocking(&snapshot) {
                log::error!("interface {} unavailable for eval: {e}", record.interface_id);
                build_errors.insert(record.interface_id.clone(), e.to_string());
            }
        }
        prepared.push(Prepared {
            record: record.clone(),
            build_error: build_errors.get(&record.interface_id).cloned(),
            snapshot,
        });
    }
    prepared.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));

    let rcfg = RecommenderConfig {
        method: cfg.method,
        ..cfg.recommender
    };
    let before = engine.calls();
    let attempts: Vec<Attempt> = if cfg.method == Method::Hybrid || cfg.parallelism <= 1 {
        prepared.iter().map(|p| attempt(engine, p, rcfg)).collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Attempt>>> = prepared.iter().map(|_| Mutex::new(None)).collect();
        thread::scope(|s| {
            for _ in 0..cfg.parallelism.min(prepared.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(p) = prepared.get(i) else { break };
                    *slots[i].lock() = Some(attempt(engine, p, rcfg));
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("every record attempted"))
            .collect()
    };
    let provider_calls = engine.calls().since(&before);

    let resolution = if cfg.judge {
        judge_all(engine, &prepared, &attempts)
    } else {
        None
    };

    let n = attempts.len();
    let latencies: Vec<f64> = attempts.iter().map(|a| a.outcome.latency_ms).collect();
    let successes = attempts.iter().filter(|a| a.outcome.success).count();
    let fallback_rate = (cfg.method == Method::Hybrid).then(|| {
        let fell_back = attempts
            .iter()
            .filter(|a| matches!(a.outcome.path, Some(p) if p != RecommendationPath::Retrieved))
            .count();
        fell_back as f64 / n as f64
    });
    let mut outcomes: Vec<RecordOutcome> = attempts.into_iter().map(|a| a.outcome).collect();
    outcomes.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    Ok(EvalReport {
        method: cfg.method,
        seed: cfg.seed,
        n_records: n,
        success_rate: successes as f64 / n as f64,
        latency_ms: LatencyStats::from_samples(&latencies),
        fallback_rate,
        resolution,
        provider_calls,
        records: outcomes,
    })
}

fn judge_all(engine: &Engine, prepared: &[Prepared], attempts: &[Attempt]) -> Option<Resolution> {
    // Separate counters keep judge traffic out of the method's call counts.
    let judge = engine.providers().with_new_counters();
    let mut scores = BTreeMap::new();
    let mut clamped = 0;
    for (p, a) in prepared.iter().zip(attempts) {
        let score = match &a.assistance {
            Some(text) => {
                let name = if p.snapshot.title.trim().is_empty() {
                    p.snapshot.url.as_str()
                } else {
                    p.snapshot.title.trim()
                };
                match judge_resolution(&p.record.challenge, text, &p.record.reference_assistance, name, &judge) {
                    Ok(v) => {
                        clamped += usize::from(v.clamped);
                        v.score
                    }
                    Err(e) => {
                        log::warn!("judge unavailable, omitting resolution: {e}");
                        return None;
                    }
                }
            }
            None => None,
        };
        scores.insert(p.record.record_id.clone(), score);
    }
    let given: Vec<f64> = scores.values().flatten().copied().collect();
    Some(Resolution {
        mean: (!given.is_empty()).then(|| given.iter().sum::<f64>() / given.len() as f64),
        scores,
        clamped,
        judge_calls: judge.calls().generate,
    })
}
