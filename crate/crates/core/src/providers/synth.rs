//! Deterministic response synthesis for the mock generator. Produces
//! schema-valid output for every template from the request context alone,
//! so the full pipeline runs offline without hand-written fixtures.

use serde_json::{json, Value};

use super::embedding::{Embedder, MockEmbedder};
use super::generation::{GenerationRequest, TemplateId};

#[derive(Debug, Clone)]
struct ListedElement {
    role: String,
    label: String,
    section: String,
}

impl ListedElement {
    fn target(&self) -> String {
        format!("[{}] {}", self.role, self.label)
    }

    fn place(&self) -> String {
        if self.section.is_empty() {
            "the page".to_string()
        } else {
            format!("the {} area", self.section)
        }
    }
}

fn parse_listing(listing: &str) -> Vec<ListedElement> {
    let mut section = String::new();
    let mut out = Vec::new();
    for raw in listing.lines() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix("[Section] ") {
            section = rest.to_string();
            continue;
        }
        if !raw.starts_with(char::is_whitespace) {
            section.clear();
        }
        let Some(rest) = line.strip_prefix('#') else { continue };
        let Some((_, rest)) = rest.split_once(' ') else { continue };
        let Some(rest) = rest.strip_prefix('[') else { continue };
        let Some((role, label)) = rest.split_once("] ") else { continue };
        out.push(ListedElement {
            role: role.to_string(),
            label: label.to_string(),
            section: section.clone(),
        });
    }
    out
}

pub(super) fn respond(request: &GenerationRequest) -> String {
    let ctx = |k: &str| request.context.get(k).map(String::as_str).unwrap_or("");
    match request.template_id {
        TemplateId::KnowledgeSummary => summary(ctx("page_title"), ctx("page_url"), ctx("documents"), ctx("ui_elements")),
        TemplateId::HandbookGeneration => {
            let n = ctx("n").parse::<usize>().unwrap_or(0);
            let elements = parse_listing(ctx("ui_elements"));
            Value::Array((0..n).filter_map(|i| handbook_case(i, &elements)).collect()).to_string()
        }
        TemplateId::FallbackCase => {
            let elements = parse_listing(ctx("ui_elements"));
            fallback_case(ctx("user_query"), &elements).to_string()
        }
        TemplateId::Judge => judge(
            ctx("user_need"),
            ctx("generated_assistance"),
            ctx("annotated_assistance"),
        ),
    }
}

pub(crate) fn summary(title: &str, url: &str, documents: &str, listing: &str) -> String {
    let elements = parse_listing(listing);
    let mut features: Vec<String> = documents
        .lines()
        .filter_map(|l| l.strip_prefix("Title: "))
        .map(|t| format!("- Documented in: {t}"))
        .collect();
    features.extend(elements.iter().filter(|e| e.role != "text").take(8).map(|e| format!("- {} ({})", e.label, e.role)));
    if features.is_empty() {
        features.push("- No features could be identified.".into());
    }
    let sections: Vec<&str> = {
        let mut s: Vec<&str> = elements.iter().map(|e| e.section.as_str()).filter(|s| !s.is_empty()).collect();
        s.dedup();
        s
    };
    format!(
        "## What it is\n{title} is a web interface served at {url}.\n\n\
         ## Features\n{}\n\n\
         ## Supported interactions\n- Clicking buttons and links\n- Editing inputs and controls{}\n\n\
         ## Unsupported interactions\n- Anything not exposed by the listed elements\n",
        features.join("\n"),
        if sections.is_empty() { String::new() } else { format!("\n- Working in the {} areas", sections.join(", ")) }
    )
}

const CATEGORIES: [&str; 6] = ["WHAT", "WHERE", "HOW", "WHY", "NEXT", "CAN"];

fn handbook_case(i: usize, elements: &[ListedElement]) -> Option<Value> {
    if elements.is_empty() {
        return None;
    }
    let m = elements.len();
    // Stride through the list so neighbouring cases touch different elements.
    let stride = if m.is_multiple_of(7) { 11 } else { 7 };
    let e = &elements[(i * stride) % m];
    let category = CATEGORIES[i % CATEGORIES.len()];
    let label = &e.label;
    let place = e.place();
    let variant = (i / CATEGORIES.len()) % 2;
    let partner = elements
        .iter()
        .skip((i * stride) % m + 1)
        .find(|o| o.section == e.section && o.target() != e.target());
    let case = match (category, variant) {
        ("WHAT", 0) => json!({
            "assistance": format!("Show a tip next to {} explaining what it means.", e.target()),
            "whyItHelps": format!("Users who do not know what {label} means in {place} can read a short tip beside it, understanding its role immediately."),
            "domSubtype": "insert.overlay_tip",
            "configuration": {"tip_text": format!("{label}: what this element controls."), "placement": "below"},
            "targets": [{"uiDescription": e.target()}],
        }),
        ("WHAT", _) => json!({
            "assistance": format!("Rewrite the label of {} so its purpose is explicit.", e.target()),
            "whyItHelps": format!("Users who find the wording of {label} unclear can read a more descriptive label, understanding what it does."),
            "domSubtype": "mutate.reframe",
            "configuration": {"new_text": {e.target(): format!("{label} (explained)")}},
            "targets": [{"uiDescription": e.target()}],
        }),
        ("WHERE", 1) if partner.is_some() => {
            let p = partner.unwrap();
            json!({
                "assistance": format!("Group {} with {} under one label.", e.target(), p.target()),
                "whyItHelps": format!("Users who cannot locate {label} and {} in {place} can find them together under a shared heading, reducing search effort.", p.label),
                "domSubtype": "recompose.group",
                "configuration": {"group_label": format!("Related to {label}")},
                "targets": [{"uiDescription": e.target()}, {"uiDescription": p.target()}],
            })
        }
        ("WHERE", _) => json!({
            "assistance": format!("Highlight {} so it stands out.", e.target()),
            "whyItHelps": format!("Users who cannot find the {label} element in {place} can see it outlined, locating it at a glance."),
            "domSubtype": "mutate.style",
            "configuration": {"properties": {"outline": "3px solid #f59e0b", "background": "#fff7e6"}},
            "targets": [{"uiDescription": e.target()}],
        }),
        ("HOW", 0) if e.role == "input" => json!({
            "assistance": format!("Turn {} into a slider.", e.target()),
            "whyItHelps": format!("Users who do not know how to enter a value for {label} can drag a slider instead, setting it without guessing the format."),
            "domSubtype": "mutate.representation",
            "configuration": {"from_modality": "text", "to_modality": "slider"},
            "targets": [{"uiDescription": e.target()}],
        }),
        ("HOW", _) => json!({
            "assistance": format!("Insert an inline helper button next to {}.", e.target()),
            "whyItHelps": format!("Users who do not know how to operate {label} in {place} can use a one-click helper beside it, completing the step directly."),
            "domSubtype": "insert.inline_control",
            "configuration": {"placement": "adjacent", "detail": {"controlType": "button", "label": format!("Help with {label}"), "action": {"type": "show-steps"}}},
            "targets": [{"uiDescription": e.target()}],
        }),
        ("WHY", _) => json!({
            "assistance": format!("Anchor an explanation to {} describing why the result changed.", e.target()),
            "whyItHelps": format!("Users who wonder why {label} changed the output in {place} can read an anchored explanation, understanding the behavior."),
            "domSubtype": "insert.overlay_tip",
            "configuration": {"tip_text": format!("Why {label} affects the result."), "placement": "right"},
            "targets": [{"uiDescription": e.target()}],
        }),
        ("NEXT", 1) if partner.is_some() => {
            let p = partner.unwrap();
            json!({
                "assistance": format!("Move {} ahead of {} to reflect the usual task order.", p.target(), e.target()),
                "whyItHelps": format!("Users who do not know what to do after {label} can follow the reordered regions, continuing the task in sequence."),
                "domSubtype": "recompose.layout",
                "configuration": {"order": [p.target(), e.target()]},
                "targets": [{"uiDescription": e.target()}, {"uiDescription": p.target()}],
            })
        }
        ("NEXT", _) => json!({
            "assistance": format!("Pulse {} to suggest it as the next step.", e.target()),
            "whyItHelps": format!("Users who finished a step and do not know what to do next with {label} can follow a pulsing cue, continuing the task."),
            "domSubtype": "mutate.style",
            "configuration": {"properties": {"animation-pulse": "1.2s", "border": "2px solid #2563eb"}},
            "targets": [{"uiDescription": e.target()}],
        }),
        _ => json!({
            "assistance": format!("Add a floating panel that saves configurations involving {}.", e.target()),
            "whyItHelps": format!("Users who want to save and compare settings of {label} can store snapshots in a floating panel, tracking alternatives the tool lacks."),
            "domSubtype": "insert.widget",
            "configuration": {
                "title": "Configuration snapshots",
                "body": format!("Save the current state of **{label}** and compare it later."),
                "controls": [{"label": "Save snapshot", "action": "save_snapshot"}, {"label": "Close", "action": "dismiss"}]
            },
            "targets": [{"uiDescription": e.target()}],
        }),
    };
    let mut case = case;
    case["category"] = json!(category);
    Some(case)
}

fn fallback_case(challenge: &str, elements: &[ListedElement]) -> Value {
    let challenge = challenge.trim();
    let embedder = MockEmbedder::new();
    let best = embedder.embed(challenge).ok().and_then(|q| {
        let mut best: Option<(f64, &ListedElement)> = None;
        for e in elements {
            let Ok(v) = embedder.embed(&e.target()) else { continue };
            let s = q.cosine(&v);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, e));
            }
        }
        best.map(|(_, e)| e)
    });
    let lower = challenge.to_lowercase();
    let why = format!("Users who ask \"{challenge}\" get a direct answer.");
    let Some(e) = best else {
        return json!({
            "assistance": "Open a floating help panel for this question.",
            "whyItHelps": why,
            "domSubtype": "insert.widget",
            "configuration": {"title": "Help", "body": challenge, "controls": [{"label": "Close", "action": "dismiss"}]},
            "targets": [],
            "category": "CAN",
        });
    };
    let target = e.target();
    let (subtype, configuration, category) = if lower.contains("where") || lower.contains("find") || lower.contains("locate") {
        ("mutate.style", json!({"properties": {"outline": "3px solid #f59e0b"}}), "WHERE")
    } else if lower.contains("how") {
        (
            "insert.inline_control",
            json!({"placement": "adjacent", "detail": {"controlType": "button", "label": format!("Do it: {}", e.label), "action": {"type": "guide"}}}),
            "HOW",
        )
    } else if lower.contains("next") {
        ("mutate.style", json!({"properties": {"animation-pulse": "1.2s"}}), "NEXT")
    } else if lower.contains("can ") || lower.contains("save") || lower.contains("compare") {
        (
            "insert.widget",
            json!({"title": "Helper", "body": challenge, "controls": [{"label": "Save snapshot", "action": "save_snapshot"}]}),
            "CAN",
        )
    } else if lower.contains("why") {
        ("insert.overlay_tip", json!({"tip_text": format!("Why: {}", e.label), "placement": "below"}), "WHY")
    } else {
        ("insert.overlay_tip", json!({"tip_text": format!("About {}", e.label), "placement": "below"}), "WHAT")
    };
    json!({
        "assistance": format!("Apply {subtype} to {target} to answer the question."),
        "whyItHelps": why,
        "domSubtype": subtype,
        "configuration": configuration,
        "targets": [{"uiDescription": target}],
        "category": category,
    })
}

fn judge(need: &str, generated: &str, reference: &str) -> String {
    let e = MockEmbedder::new();
    let sim = |a: &str, b: &str| match (e.embed(a), e.embed(b)) {
        (Ok(x), Ok(y)) => x.cosine(&y).max(0.0),
        _ => 0.0,
    };
    let c = sim(generated, need).max(sim(generated, reference));
    let score = (3.0 + 7.0 * c).round().clamp(0.0, 10.0) as i64;
    json!({"score": score, "reasoning": format!("lexical overlap {c:.2} with the need or reference")}).to_string()
}
