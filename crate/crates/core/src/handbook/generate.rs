use std::collections::BTreeMap;

use serde_json::Value;

use super::case::{validate_case, AssistanceCase, CaseOrigin, RejectReason};
use super::{case_id, HandbookError};
use crate::dom_model::{element_listing, UiElement};
use crate::knowledge::InterfaceKnowledge;
use crate::providers::{extract_json, GenerationRequest, ProviderError, Providers, TemplateId};

#[derive(Debug, Clone, PartialEq)]
pub struct CaseRejection {
    /// Position of the candidate in the generator output.
    pub index: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedHandbook {
    pub cases: Vec<AssistanceCase>,
    pub rejections: Vec<CaseRejection>,
}

pub(crate) fn generation_context(
    knowledge: &InterfaceKnowledge,
    elements: &[UiElement],
    user_query: &str,
) -> BTreeMap<String, String> {
    [
        ("page_title", knowledge.page_title.clone()),
        ("page_url", knowledge.page_url.clone()),
        ("interface_knowledge", knowledge.summary.clone()),
        ("user_query", user_query.to_string()),
        ("ui_elements", element_listing(elements)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Candidates may come back as a bare array or wrapped in an object.
fn candidate_list(value: Value) -> Result<Vec<Value>, ProviderError> {
    match value {
        Value::Array(items) => Ok(items),
        Value::Object(mut map) => ["cases", "pairs", "assistance"]
            .iter()
            .find_map(|k| match map.remove(*k) {
                Some(Value::Array(items)) => Some(items),
                _ => None,
            })
            .ok_or_else(|| ProviderError::MalformedResponse("expected a JSON array of cases".into())),
        _ => Err(ProviderError::MalformedResponse("expected a JSON array of cases".into())),
    }
}

/// Asks the generator for `n` cases and keeps the ones that validate
/// against `elements`. Every rejection is logged with its reason.
pub fn generate_handbook(
    knowledge: &InterfaceKnowledge,
    elements: &[UiElement],
    n: usize,
    providers: &Providers,
) -> Result<GeneratedHandbook, HandbookError> {
    let mut context = generation_context(knowledge, elements, "");
    context.insert("n".into(), n.to_string());
    let request = GenerationRequest::new(TemplateId::HandbookGeneration, context)?;
    let text = providers.generate(&request)?;
    let mut candidates = candidate_list(extract_json(&text)?)?;
    if candidates.len() > n {
        log::warn!("generator returned {} candidates for n={n}; keeping the first {n}", candidates.len());
        candidates.truncate(n);
    }
    let mut cases = Vec::new();
    let mut rejections = Vec::new();
    for (index, raw) in candidates.iter().enumerate() {
        match validate_case(raw, elements) {
            Ok(valid) => {
                let id = case_id(&knowledge.interface_id, CaseOrigin::HandbookGenerated, cases.len());
                cases.push(valid.into_case(id, CaseOrigin::HandbookGenerated));
            }
            Err(reason) => {
                log::warn!("rejected handbook candidate {index}: {reason}");
                rejections.push(CaseRejection { index, reason });
            }
        }
    }
    if cases.is_empty() {
        return Err(HandbookError::NoValidCases { rejected: rejections.len() });
    }
    Ok(GeneratedHandbook { cases, rejections })
}
