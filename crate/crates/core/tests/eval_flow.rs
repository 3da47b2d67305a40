//! Evaluation over the bundled dataset.

mod common;

use insitu_core::engine::Engine;
use insitu_core::evalkit::{load_dataset, run_eval, EvalConfig, EvalError};
use insitu_core::recommender::{Method, RecommendationPath};

fn engine(dir: &std::path::Path, fixtures: &str) -> Engine {
    let mut cfg = common::engine_config(dir);
    cfg.persist = false;
    cfg.providers.mock.fixtures_dir = Some(common::fixtures().join(fixtures));
    Engine::new(cfg).unwrap()
}

fn eval(method: Method, judge: bool, fixtures: &str) -> insitu_core::evalkit::EvalReport {
    let dir = tempfile::tempdir().unwrap();
    let records = load_dataset(&common::fixtures().join("eval/dataset.jsonl")).unwrap();
    let cfg = EvalConfig { method, seed: 11, judge, ..EvalConfig::default() };
    run_eval(&engine(dir.path(), fixtures), &records, &cfg).unwrap()
}

#[test]
fn hybrid_reports_every_metric() {
    let r = eval(Method::Hybrid, true, "mock");
    assert_eq!(r.n_records, 24);
    assert!((0.0..=1.0).contains(&r.success_rate));
    assert!(r.success_rate > 0.5, "{}", r.success_rate);
    assert!(r.latency_ms.p50 <= r.latency_ms.p95);
    let generated = r.records.iter().filter(|o| o.path != Some(RecommendationPath::Retrieved)).count();
    assert_eq!(r.fallback_rate, Some(generated as f64 / 24.0));
    let gen_paths = r.records.iter().filter(|o| o.path == Some(RecommendationPath::Generated)).count() as u64;
    assert!(r.provider_calls.generate >= gen_paths);
    assert_eq!(r.provider_calls.retrieve, 24);

    let res = r.resolution.unwrap();
    assert_eq!(res.scores.len(), 24);
    assert_eq!(res.clamped, 0);
    assert!(res.scores.values().flatten().all(|s| (0.0..=10.0).contains(s)));
    assert!(res.mean.is_some());
}

#[test]
fn methods_touch_only_their_own_providers() {
    let handbook = eval(Method::HandbookOnly, false, "mock");
    assert_eq!(handbook.provider_calls.generate, 0);
    assert_eq!(handbook.provider_calls.retrieve, 24);
    assert_eq!(handbook.fallback_rate, None);
    assert!(handbook.resolution.is_none());

    let generate = eval(Method::GenerateOnly, false, "mock");
    assert_eq!(generate.provider_calls.retrieve, 0);
    assert!(generate.provider_calls.generate >= 24);
    assert!(generate.records.iter().all(|o| o.path != Some(RecommendationPath::Retrieved)));
}

#[test]
fn out_of_range_judge_scores_are_clamped() {
    let r = eval(Method::HandbookOnly, true, "mock_judge");
    let res = r.resolution.unwrap();
    let scored: Vec<f64> = res.scores.values().flatten().copied().collect();
    assert!(!scored.is_empty());
    assert!(scored.iter().all(|&s| s == 10.0));
    assert_eq!(res.clamped, scored.len());
    assert_eq!(r.provider_calls.generate, 0, "judge calls are counted apart");
}

#[test]
fn same_seed_same_report() {
    let a = eval(Method::Hybrid, false, "mock");
    let b = eval(Method::Hybrid, false, "mock");
    assert_eq!(a.without_latency(), b.without_latency());
}

#[test]
fn empty_dataset_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    let records = load_dataset(&path).unwrap();
    let err = run_eval(&engine(dir.path(), "mock"), &records, &EvalConfig::default()).unwrap_err();
    assert!(matches!(err, EvalError::NoRecords));
}
