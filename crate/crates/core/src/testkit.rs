//! Seeded generators for random snapshots and valid cases, shared by the
//! property tests and the acceptance suite.

use std::collections::BTreeSet;

use chrono::{TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

use crate::dom_model::{extract_interactables, BoundingBox, DomNode, DomSnapshot, NodeFlag, UiElement};
use crate::grounding::GroundedTarget;
use crate::handbook::{case_id, AssistanceCase, CaseOrigin, HandbookError, HandbookIndex, SubtypeId, UiTarget};
use crate::providers::Providers;

const CONTAINERS: &[&str] = &["div", "section", "ul", "li", "form", "nav"];
const LEAVES: &[&str] = &["button", "a", "input", "span", "p", "h2", "select", "canvas", "label", "textarea"];
const WORDS: &[&str] = &[
    "Sort", "Filter", "Save", "Open", "Cars", "Year", "Color", "Size", "Export", "Undo", "Search", "Name",
    "Chart", "Axis", "Legend", "Zoom", "Reset", "Apply",
];

/// A random tree of roughly `size` nodes with contiguous pre-order ids.
pub fn random_snapshot<R: Rng>(rng: &mut R, size: usize) -> DomSnapshot {
    let mut nodes = vec![DomNode::new(0, "body")];
    nodes[0].flags.insert(NodeFlag::Visible);
    nodes[0].bbox = Some(BoundingBox { x: 0.0, y: 0.0, width: 1280.0, height: 800.0 });
    grow(rng, &mut nodes, 0, 0, size.max(2));
    DomSnapshot::from_parts(
        "https://random.insitu.test/page".into(),
        "Random page".into(),
        Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap(),
        nodes,
    )
    .expect("generated tree is well formed")
}

fn grow<R: Rng>(rng: &mut R, nodes: &mut Vec<DomNode>, parent: usize, depth: usize, size: usize) {
    let fanout = rng.gen_range(1..=5);
    for _ in 0..fanout {
        if nodes.len() >= size {
            return;
        }
        let container = depth < 4 && rng.gen_bool(0.4);
        let tag = if container {
            *CONTAINERS.choose(rng).unwrap()
        } else {
            *LEAVES.choose(rng).unwrap()
        };
        let id = nodes.len() as u32;
        let mut node = DomNode::new(id, tag);
        if !container || rng.gen_bool(0.2) {
            node.text = format!("{} {}", WORDS.choose(rng).unwrap(), rng.gen_range(0..50));
        }
        if rng.gen_bool(0.9) {
            node.flags.insert(NodeFlag::Visible);
        }
        if rng.gen_bool(0.15) {
            node.flags.insert(NodeFlag::ClickableHandler);
        }
        if rng.gen_bool(0.3) {
            node.attrs.insert("style".into(), format!("color: #{:06x}", rng.gen_range(0..0xffffff)));
        }
        if tag == "input" {
            let t = ["text", "number", "range", "checkbox"].choose(rng).unwrap();
            node.attrs.insert("type".into(), t.to_string());
        }
        if rng.gen_bool(0.1) {
            node.attrs.insert("role".into(), "button".into());
        }
        node.bbox = Some(BoundingBox {
            x: rng.gen_range(0.0..1200.0),
            y: rng.gen_range(0.0..760.0),
            width: rng.gen_range(1.0..300.0),
            height: rng.gen_range(1.0..80.0),
        });
        nodes.push(node);
        nodes[parent].children.push(id);
        if container {
            grow(rng, nodes, id as usize, depth + 1, size);
        }
    }
}

/// A case with a valid configuration for `subtype` over the snapshot's
/// elements, plus its grounding. None when the page cannot host the
/// subtype (for example no two siblings to reorder).
pub fn random_case<R: Rng>(
    rng: &mut R,
    snapshot: &DomSnapshot,
    subtype: SubtypeId,
) -> Option<(AssistanceCase, Vec<GroundedTarget>)> {
    let elements = distinct_forms(extract_interactables(snapshot));
    if elements.is_empty() {
        return None;
    }
    let pick = |rng: &mut R, n: usize| -> Vec<UiElement> { elements.choose_multiple(rng, n).cloned().collect() };
    let (targets, configuration) = match subtype {
        SubtypeId::InsertOverlayTip => {
            let placement = ["above", "below", "left", "right"].choose(rng).unwrap();
            (pick(rng, 1), json!({"tip_text": "A short tip.", "placement": placement}))
        }
        SubtypeId::InsertInlineControl => {
            let placement = ["before", "adjacent", "inside"].choose(rng).unwrap();
            let control = ["button", "search-input", "toggle"].choose(rng).unwrap();
            (
                pick(rng, 1),
                json!({"placement": placement, "detail": {"controlType": control, "label": "Helper", "action": "assist"}}),
            )
        }
        SubtypeId::InsertWidget => {
            let n = rng.gen_range(0..=1);
            (
            pick(rng, n),
            json!({"title": "Panel", "body": "Some **help**.", "controls": [{"label": "Save", "action": "save_snapshot"}, {"label": "Close", "action": "dismiss"}]}),
            )
        }
        SubtypeId::MutateStyle => {
            let n = rng.gen_range(1..=3).min(elements.len());
            (pick(rng, n), json!({"properties": {"outline": "2px solid red", "opacity": "0.8", "animation-pulse": "1s"}}))
        }
        SubtypeId::MutateRepresentation => {
            let (from, to) = [("text", "slider"), ("text", "color-picker"), ("number", "stepper")].choose(rng).unwrap();
            (pick(rng, 1), json!({"from_modality": from, "to_modality": to}))
        }
        SubtypeId::MutateReframe => (pick(rng, 1), json!({"new_text": "Clearer words"})),
        SubtypeId::RecomposeReorder => {
            let parents = snapshot.parents();
            let mut groups: Vec<Vec<UiElement>> = Vec::new();
            for e in &elements {
                let p = parents[e.node_id as usize];
                match groups.iter_mut().find(|g| parents[g[0].node_id as usize] == p) {
                    Some(g) => g.push(e.clone()),
                    None => groups.push(vec![e.clone()]),
                }
            }
            groups.retain(|g| g.len() >= 2);
            let group = groups.choose(rng)?;
            let n = rng.gen_range(2..=group.len().min(4));
            let chosen: Vec<UiElement> = group.choose_multiple(rng, n).cloned().collect();
            let order = shuffled_forms(rng, &chosen);
            (chosen, json!({"order": order}))
        }
        SubtypeId::RecomposeGroup | SubtypeId::RecomposeLayout => {
            let n = rng.gen_range(2..=3);
            let chosen = independent(rng, snapshot, &elements, n)?;
            let config = if subtype == SubtypeId::RecomposeGroup {
                json!({"group_label": "Related"})
            } else {
                json!({"order": shuffled_forms(rng, &chosen)})
            };
            (chosen, config)
        }
    };
    let case = AssistanceCase {
        case_id: "rand/h0000".into(),
        assistance: "Random assistance".into(),
        rationale: "Random rationale".into(),
        subtype,
        targets: targets.iter().map(|e| UiTarget::new(e.target_form())).collect(),
        configuration,
        category: None,
        feedback: 0,
        origin: CaseOrigin::HandbookGenerated,
    };
    let grounded = targets
        .iter()
        .map(|e| GroundedTarget {
            ui_description: e.target_form(),
            element_index: e.index,
            node_id: e.node_id,
            similarity: 1.0,
        })
        .collect();
    Some((case, grounded))
}

/// Keeps the first element for every target form so targets are unique.
fn distinct_forms(elements: Vec<UiElement>) -> Vec<UiElement> {
    let mut seen = BTreeSet::new();
    elements.into_iter().filter(|e| seen.insert(e.target_form())).collect()
}

fn shuffled_forms<R: Rng>(rng: &mut R, chosen: &[UiElement]) -> Vec<Value> {
    let mut order: Vec<Value> = chosen.iter().map(|e| Value::String(e.target_form())).collect();
    order.shuffle(rng);
    order
}

/// `n` elements none of which contains another.
fn independent<R: Rng>(rng: &mut R, snapshot: &DomSnapshot, elements: &[UiElement], n: usize) -> Option<Vec<UiElement>> {
    let mut pool = elements.to_vec();
    pool.shuffle(rng);
    let mut chosen: Vec<UiElement> = Vec::new();
    for e in pool {
        let free = chosen
            .iter()
            .all(|c| !snapshot.is_ancestor(c.node_id, e.node_id) && !snapshot.is_ancestor(e.node_id, c.node_id));
        if free {
            chosen.push(e);
        }
        if chosen.len() == n {
            return Some(chosen);
        }
    }
    (chosen.len() >= 2).then_some(chosen)
}

const RATIONALE_WORDS: &[&str] = &[
    "users", "who", "want", "to", "compare", "filter", "sort", "save", "charts", "fields", "quickly", "find",
    "hidden", "options", "encode", "color", "size", "undo", "mistakes", "explore", "related", "views",
];

/// A short rationale drawn from a small vocabulary, so that similar and
/// identical rationales are common.
pub fn random_rationale<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(2..=7);
    (0..n).map(|_| *RATIONALE_WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// `n` tip cases with random rationales and feedback. About one in five
/// repeats an earlier rationale so exact score ties occur.
pub fn random_handbook<R: Rng>(rng: &mut R, interface_id: &str, n: usize, providers: &Providers) -> Result<HandbookIndex, HandbookError> {
    let mut rationales: Vec<String> = Vec::with_capacity(n);
    let mut cases = Vec::with_capacity(n);
    for seq in 0..n {
        let rationale = if !rationales.is_empty() && rng.gen_bool(0.2) {
            rationales.choose(rng).unwrap().clone()
        } else {
            random_rationale(rng)
        };
        rationales.push(rationale.clone());
        cases.push(AssistanceCase {
            case_id: case_id(interface_id, CaseOrigin::HandbookGenerated, seq),
            assistance: format!("Tip {seq}"),
            rationale,
            subtype: SubtypeId::InsertOverlayTip,
            targets: vec![UiTarget::new("[button] Save")],
            configuration: json!({"tip_text": "Tip.", "placement": "below"}),
            category: None,
            feedback: rng.gen_range(-2..=2),
            origin: CaseOrigin::HandbookGenerated,
        });
    }
    HandbookIndex::build(interface_id, cases, providers)
}
