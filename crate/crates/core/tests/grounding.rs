//! Target descriptions resolve to the elements an independent scorer picks.

mod common;

use insitu_core::dom_model::extract_interactables;
use insitu_core::grounding::{cache_element_embeddings, ground_case, GroundingConfig, GroundingError};
use insitu_core::handbook::{AssistanceCase, CaseOrigin, SubtypeId, UiTarget};
use insitu_core::providers::Providers;
use serde_json::json;

fn tip(targets: &[&str]) -> AssistanceCase {
    AssistanceCase {
        case_id: "t/h0000".into(),
        assistance: "a".into(),
        rationale: "r".into(),
        subtype: SubtypeId::MutateStyle,
        targets: targets.iter().map(|t| UiTarget::new(*t)).collect(),
        configuration: json!({"properties": {"outline": "1px solid red"}}),
        category: None,
        feedback: 0,
        origin: CaseOrigin::HandbookGenerated,
    }
}

#[test]
fn exact_and_paraphrased_targets_resolve_without_generation() {
    let fx = common::read_json("grounding/voyager_targets.json");
    let snap = common::snapshot("voyager");
    let elements = extract_interactables(&snap);
    let providers = Providers::mock();
    let table = cache_element_embeddings(&elements, &providers).unwrap();
    let cfg = GroundingConfig::default();

    let exact = fx["exact"].as_array().unwrap();
    let para = fx["paraphrase"].as_array().unwrap();
    assert_eq!((exact.len(), para.len()), (20, 10));

    for t in exact {
        let desc = t["description"].as_str().unwrap();
        let g = ground_case(&tip(&[desc]), &table, &cfg, &providers).unwrap();
        assert_eq!(g[0].element_index as u64, t["element_index"].as_u64().unwrap(), "{desc}");
        assert!(g[0].similarity > 0.5, "{desc}: {}", g[0].similarity);
    }
    for t in para {
        let desc = t["description"].as_str().unwrap();
        let g = ground_case(&tip(&[desc]), &table, &cfg, &providers).unwrap();
        assert_eq!(g[0].element_index as u64, t["oracle_index"].as_u64().unwrap(), "{desc}");
        assert_eq!(elements[g[0].element_index].label, t["oracle_label"]);
        let want = t["oracle_similarity"].as_f64().unwrap();
        assert!((g[0].similarity - want).abs() < 1e-9, "{desc}: {} vs {want}", g[0].similarity);
    }
    assert_eq!(providers.calls().generate, 0);
}

#[test]
fn several_targets_resolve_together() {
    let snap = common::snapshot("voyager");
    let elements = extract_interactables(&snap);
    let providers = Providers::mock();
    let table = cache_element_embeddings(&elements, &providers).unwrap();
    let case = tip(&["[link] Undo", "[link] Redo", "the horsepower field"]);
    let g = ground_case(&case, &table, &GroundingConfig::default(), &providers).unwrap();
    let labels: Vec<&str> = g.iter().map(|t| elements[t.element_index].label.as_str()).collect();
    assert_eq!(labels, ["Undo", "Redo", "Horsepower"]);
}

#[test]
fn unrelated_targets_are_all_reported() {
    let snap = common::snapshot("voyager");
    let elements = extract_interactables(&snap);
    let providers = Providers::mock();
    let table = cache_element_embeddings(&elements, &providers).unwrap();
    let case = tip(&["[link] Undo", "qqqq zzzz", "jqjq"]);
    match ground_case(&case, &table, &GroundingConfig::default(), &providers) {
        Err(GroundingError::UnresolvedTargets(u)) => {
            let descs: Vec<&str> = u.iter().map(|t| t.ui_description.as_str()).collect();
            assert_eq!(descs, ["qqqq zzzz", "jqjq"]);
            assert!(u.iter().all(|t| t.best_similarity.unwrap() < 0.15));
        }
        other => panic!("expected unresolved targets, got {other:?}"),
    }
}
