//! The bundled fixtures agree with what the extractor and loaders produce.

mod common;

use std::collections::BTreeSet;

use insitu_core::dom_model::extract_interactables;
use insitu_core::evalkit::load_dataset;
use insitu_core::handbook::ChallengeCategory;
use insitu_core::knowledge::interface_id;

#[test]
fn extracted_elements_match_authored_listing() {
    for name in ["voyager", "playground"] {
        let snap = common::snapshot(name);
        let got = extract_interactables(&snap);
        let want = common::read_json(&format!("snapshots/{name}.elements.json"));
        let want = want.as_array().unwrap();
        assert_eq!(got.len(), want.len(), "{name}");
        for (g, w) in got.iter().zip(want) {
            assert_eq!(g.index as u64, w["index"].as_u64().unwrap());
            assert_eq!(g.node_id as u64, w["node_id"].as_u64().unwrap(), "{name} #{}", g.index);
            assert_eq!(g.role.as_str(), w["role"], "{name} #{}", g.index);
            assert_eq!(g.label, w["label"], "{name} #{}", g.index);
            assert_eq!(g.section, w["section"], "{name} #{}", g.index);
            assert_eq!(g.target_form(), w["target"]);
            assert_eq!(g.grounding_text(), w["grounding_text"]);
        }
    }
}

#[test]
fn voyager_has_fifty_elements() {
    assert_eq!(extract_interactables(&common::snapshot("voyager")).len(), 50);
}

#[test]
fn bundled_dataset_covers_every_category() {
    let records = load_dataset(&common::fixtures().join("eval/dataset.jsonl")).unwrap();
    assert_eq!(records.len(), 24);
    let cats: BTreeSet<ChallengeCategory> = records.iter().map(|r| r.category).collect();
    assert_eq!(cats.len(), 6);
    for r in &records {
        assert!(r.snapshot_path.is_file());
    }
    let voyager = common::snapshot("voyager");
    assert_eq!(
        records.iter().filter(|r| r.interface_id == interface_id(&voyager.url).unwrap()).count(),
        12
    );
}

#[test]
fn query_string_does_not_change_interface() {
    let a = interface_id("https://voyager.insitu.test/app/cars?dataset=cars").unwrap();
    let b = interface_id("https://voyager.insitu.test/app/cars#top").unwrap();
    assert_eq!(a, b);
    // sha256("https://voyager.insitu.test/app/cars")[..16], computed by the
    // authoring script.
    let dataset = std::fs::read_to_string(common::fixtures().join("eval/dataset.jsonl")).unwrap();
    assert!(dataset.contains(&a));
}
