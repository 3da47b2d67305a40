//! Generation, validation, persistence and fallback growth of a handbook.

mod common;

use std::sync::Arc;

use insitu_core::dom_model::extract_interactables;
use insitu_core::handbook::{generate_handbook, CaseOrigin, HandbookIndex};
use insitu_core::knowledge::build_knowledge;
use insitu_core::providers::{GenerationRequest, Generator, MockGenerator, ProviderError, Providers, TemplateId};
use insitu_core::recommender::{recommend, Method, RecommendationPath, RecommenderConfig};
use parking_lot::RwLock;
use serde_json::{json, Value};

const BROKEN: [usize; 3] = [7, 55, 101];

/// Synthesizes a full handbook response, then breaks three candidates in
/// three different ways.
struct Corrupting(MockGenerator);

impl Generator for Corrupting {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        let text = self.0.generate(request)?;
        if request.template_id != TemplateId::HandbookGeneration {
            return Ok(text);
        }
        let mut items: Vec<Value> = serde_json::from_str(&text).unwrap();
        assert_eq!(items.len(), 120, "synthesizer should fill the request");
        items[BROKEN[0]]["targets"] = json!([{"uiDescription": "[button] Launch rocket"}]);
        items[BROKEN[1]].as_object_mut().unwrap().remove("domSubtype");
        items[BROKEN[2]]["domSubtype"] = json!("insert.overlay_tip");
        items[BROKEN[2]]["configuration"] = json!({"placement": "sideways"});
        Ok(Value::Array(items).to_string())
    }
}

fn providers() -> Providers {
    Providers::mock().with_generator(Arc::new(Corrupting(MockGenerator::synthesizing())))
}

#[test]
fn invalid_candidates_are_dropped_and_the_rest_persist_byte_for_byte() {
    let snap = common::snapshot("voyager");
    let elements = extract_interactables(&snap);
    let providers = providers();
    let knowledge = build_knowledge(&snap, &elements, &providers).unwrap();
    let generated = generate_handbook(&knowledge, &elements, 120, &providers).unwrap();

    assert_eq!(generated.cases.len(), 117);
    let rejected: Vec<usize> = generated.rejections.iter().map(|r| r.index).collect();
    assert_eq!(rejected, BROKEN);
    let kinds: Vec<&str> = generated.rejections.iter().map(|r| r.reason.kind()).collect();
    assert_eq!(kinds, ["UnlistedTarget", "MissingField", "BadConfiguration"]);
    for (i, c) in generated.cases.iter().enumerate() {
        assert_eq!(c.case_id, format!("{}/h{i:04}", knowledge.interface_id));
    }

    let index = HandbookIndex::build(&knowledge.interface_id, generated.cases, &providers).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.json");
    let second = dir.path().join("b.json");
    index.save(&first).unwrap();
    let loaded = HandbookIndex::load(&first).unwrap();
    assert_eq!(loaded, index);
    loaded.save(&second).unwrap();
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn fallback_case_is_stored_and_found_by_its_challenge() {
    let snap = common::snapshot("voyager");
    let elements = extract_interactables(&snap);
    let providers = Providers::mock();
    let knowledge = build_knowledge(&snap, &elements, &providers).unwrap();
    let generated = generate_handbook(&knowledge, &elements, 120, &providers).unwrap();
    let index = RwLock::new(HandbookIndex::build(&knowledge.interface_id, generated.cases, &providers).unwrap());
    let before = index.read().len();

    let challenge = "my exported png looks blurry on a projector";
    let cfg = RecommenderConfig::default();
    let first = recommend(challenge, &elements, &index, &knowledge, &cfg, &providers).unwrap();
    assert!(first.top_score.unwrap() <= cfg.tau, "{:?}", first.top_score);
    assert_eq!(first.path, RecommendationPath::Generated);
    let id = first.persisted_case_id.clone().unwrap();
    assert_eq!(id, format!("{}/f{before:04}", knowledge.interface_id));
    assert_eq!(index.read().get(&id).unwrap().origin, CaseOrigin::FallbackGenerated);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("handbook.json");
    index.read().save(&path).unwrap();
    let reloaded = RwLock::new(HandbookIndex::load(&path).unwrap());
    assert_eq!(reloaded.read().len(), before + 1);

    let calls = providers.calls().generate;
    let again = recommend(challenge, &elements, &reloaded, &knowledge, &cfg, &providers).unwrap();
    assert_eq!(again.path, RecommendationPath::Retrieved);
    assert_eq!(again.candidates[0].case.case_id, id);
    assert_eq!(providers.calls().generate, calls);

    let handbook_only = RecommenderConfig { method: Method::HandbookOnly, ..cfg };
    let r = recommend(challenge, &elements, &reloaded, &knowledge, &handbook_only, &providers).unwrap();
    assert_eq!(r.candidates[0].case.case_id, id);
}
