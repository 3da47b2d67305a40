//! End-to-end engine behavior on the bundled pages.

mod common;

use std::collections::BTreeSet;
use std::thread;

use insitu_core::delivery::{apply_sim, revert_sim};
use insitu_core::dom_model::snapshot_equal;
use insitu_core::engine::{AssistRequest, CandidatePath, Engine, EngineError, FeedbackRequest, InterfaceStatus};
use insitu_core::handbook::HandbookIndex;
use insitu_core::knowledge::interface_id;
use insitu_core::recommender::RecommendationPath;

fn request(iface: &str, challenge: &str, snapshot: &str) -> AssistRequest {
    AssistRequest {
        interface_id: iface.into(),
        session_id: None,
        challenge: challenge.into(),
        snapshot: common::snapshot(snapshot),
        selected_elements: vec![],
    }
}

fn ready_engine(dir: &std::path::Path) -> (Engine, String) {
    let engine = Engine::new(common::engine_config(dir)).unwrap();
    let status = engine.init_interface_blocking(&common::snapshot("voyager")).unwrap();
    assert_eq!(status.status, InterfaceStatus::Ready);
    assert!(!status.degraded);
    let id = interface_id(&common::snapshot("voyager").url).unwrap();
    (engine, id)
}

#[test]
fn retrieved_plans_apply_and_revert_on_the_page() {
    let dir = tempfile::tempdir().unwrap();
    let (engine, id) = ready_engine(dir.path());
    assert!(engine.handbook_len(&id).unwrap() >= 100);
    let knowledge = engine.knowledge(&id).unwrap();
    assert!(!knowledge.sources.is_empty());

    let handbook = HandbookIndex::from_json(&engine.export_handbook(&id).unwrap()).unwrap();
    let rationale = handbook.cases()[3].rationale.clone();
    let before = engine.calls();
    let resp = engine.assist(&request(&id, &rationale, "voyager")).unwrap();
    assert_eq!(resp.path, RecommendationPath::Retrieved);
    assert_eq!(engine.calls().since(&before).generate, 0);
    assert!(!resp.candidates.is_empty() && resp.candidates.len() <= 3);
    assert_eq!(resp.candidates[0].path, CandidatePath::Retrieved);
    assert!(resp.timings.stage_sum() <= resp.timings.total_ms + 5.0);

    let snap = common::snapshot("voyager");
    let mut plan_ids = BTreeSet::new();
    for c in &resp.candidates {
        assert!(plan_ids.insert(c.plan.plan_id.clone()));
        let (applied, record) = apply_sim(&snap, &c.plan).unwrap();
        let back = revert_sim(&applied, &record);
        assert!(snapshot_equal(&snap, &back.snapshot, false), "{}", c.case.case_id);
    }
    let session = engine.session(&resp.session_id).unwrap();
    assert_eq!(session.delivered.len(), resp.candidates.len());

    let mut follow = request(&id, &rationale, "voyager");
    follow.session_id = Some(resp.session_id.clone());
    let again = engine.assist(&follow).unwrap();
    assert_eq!(again.session_id, resp.session_id);
    for c in &again.candidates {
        assert!(plan_ids.insert(c.plan.plan_id.clone()), "plan id reused");
    }
}

#[test]
fn wire_shape_of_an_assist_response() {
    let dir = tempfile::tempdir().unwrap();
    let (engine, id) = ready_engine(dir.path());
    let resp = engine.assist(&request(&id, "how do I add a color encoding", "voyager")).unwrap();
    let v = serde_json::to_value(&resp).unwrap();
    for key in ["session_id", "candidates", "timings"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let c = &v["candidates"][0];
    for key in ["case", "plan", "path"] {
        assert!(c.get(key).is_some(), "{key}");
    }
    assert!(c["plan"]["ops"].as_array().is_some_and(|o| !o.is_empty()));
    let wire: AssistRequest = serde_json::from_value(serde_json::json!({
        "interface_id": id,
        "challenge": "x",
        "snapshot": serde_json::to_value(common::snapshot("voyager")).unwrap(),
    }))
    .unwrap();
    assert!(wire.selected_elements.is_empty() && wire.session_id.is_none());
}

#[test]
fn wrong_page_for_interface_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (engine, id) = ready_engine(dir.path());
    let err = engine.assist(&request(&id, "help", "playground")).unwrap_err();
    assert!(matches!(err, EngineError::BadRequest(_)), "{err:?}");
    assert_eq!(err.http_status(), 400);
}

#[test]
fn concurrent_feedback_is_not_lost() {
    let dir = tempfile::tempdir().unwrap();
    let (engine, id) = ready_engine(dir.path());
    let case_id = format!("{id}/h0005");
    let start = HandbookIndex::from_json(&engine.export_handbook(&id).unwrap()).unwrap().get(&case_id).unwrap().feedback;
    thread::scope(|s| {
        for t in 0..8 {
            let engine = engine.clone();
            let case_id = case_id.clone();
            s.spawn(move || {
                for _ in 0..25 {
                    let rating = if t == 0 { -1 } else { 1 };
                    engine.feedback(&FeedbackRequest { case_id: case_id.clone(), rating, session_id: None }).unwrap();
                }
            });
        }
    });
    let expected = start + 7 * 25 - 25;
    let restarted = Engine::new(common::engine_config(dir.path())).unwrap();
    restarted.init_interface_blocking(&common::snapshot("voyager")).unwrap();
    assert_eq!(restarted.calls().generate, 0, "restart must reuse the stored handbook");
    let stored = HandbookIndex::from_json(&restarted.export_handbook(&id).unwrap()).unwrap();
    assert_eq!(stored.get(&case_id).unwrap().feedback, expected);

    let bad = engine.feedback(&FeedbackRequest { case_id: case_id.clone(), rating: 2, session_id: None }).unwrap_err();
    assert_eq!(bad.http_status(), 400);
    let unknown = engine.feedback(&FeedbackRequest { case_id: format!("{id}/h9999"), rating: 1, session_id: None }).unwrap_err();
    assert_eq!(unknown.http_status(), 404);
}

#[test]
fn concurrent_fallbacks_each_get_their_own_case() {
    let dir = tempfile::tempdir().unwrap();
    let (engine, id) = ready_engine(dir.path());
    let before = engine.handbook_len(&id).unwrap();
    let challenges = [
        "my exported png looks blurry on a projector",
        "the page freezes when I paste a huge csv",
        "can I share a link that opens this exact chart",
        "why do the fonts look tiny on my laptop",
        "is there a keyboard shortcut for everything",
        "I would like a dark theme at night",
    ];
    let generated: usize = thread::scope(|s| {
        let handles: Vec<_> = challenges
            .iter()
            .map(|c| {
                let engine = engine.clone();
                let id = id.clone();
                s.spawn(move || engine.assist(&request(&id, c, "voyager")).unwrap())
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap())
            .filter(|r| r.path == RecommendationPath::Generated)
            .count()
    });
    assert!(generated >= 1);
    let after = engine.handbook_len(&id).unwrap();
    assert!(after > before && after <= before + generated);
    let stored = HandbookIndex::load(&engine.config().interface_dir(&id).join("handbook.json")).unwrap();
    assert_eq!(stored.len(), after);
    let ids: BTreeSet<&str> = stored.cases().iter().map(|c| c.case_id.as_str()).collect();
    assert_eq!(ids.len(), after);
}

#[test]
fn playground_builds_and_assists() {
    let dir = tempfile::tempdir().unwrap();
    let engine = Engine::new(common::engine_config(dir.path())).unwrap();
    let snap = common::snapshot("playground");
    let status = engine.init_interface_blocking(&snap).unwrap();
    assert!(status.status.is_usable());
    let id = interface_id(&snap.url).unwrap();
    let resp = engine.assist(&request(&id, "where do I type my email address", "playground")).unwrap();
    assert!(!resp.candidates.is_empty());
}
