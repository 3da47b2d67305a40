//! Assistance cases and their validation against an element listing.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::delivery::config::{parse_config, Violation};
use crate::dom_model::UiElement;

/// The nine intervention kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubtypeId {
    #[serde(rename = "insert.overlay_tip")]
    InsertOverlayTip,
    #[serde(rename = "insert.widget")]
    InsertWidget,
    #[serde(rename = "insert.inline_control")]
    InsertInlineControl,
    #[serde(rename = "mutate.style")]
    MutateStyle,
    #[serde(rename = "mutate.representation")]
    MutateRepresentation,
    #[serde(rename = "mutate.reframe")]
    MutateReframe,
    #[serde(rename = "recompose.reorder")]
    RecomposeReorder,
    #[serde(rename = "recompose.group")]
    RecomposeGroup,
    #[serde(rename = "recompose.layout")]
    RecomposeLayout,
}

impl SubtypeId {
    pub const ALL: [SubtypeId; 9] = [
        SubtypeId::InsertOverlayTip,
        SubtypeId::InsertWidget,
        SubtypeId::InsertInlineControl,
        SubtypeId::MutateStyle,
        SubtypeId::MutateRepresentation,
        SubtypeId::MutateReframe,
        SubtypeId::RecomposeReorder,
        SubtypeId::RecomposeGroup,
        SubtypeId::RecomposeLayout,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SubtypeId::InsertOverlayTip => "insert.overlay_tip",
            SubtypeId::InsertWidget => "insert.widget",
            SubtypeId::InsertInlineControl => "insert.inline_control",
            SubtypeId::MutateStyle => "mutate.style",
            SubtypeId::MutateRepresentation => "mutate.representation",
            SubtypeId::MutateReframe => "mutate.reframe",
            SubtypeId::RecomposeReorder => "recompose.reorder",
            SubtypeId::RecomposeGroup => "recompose.group",
            SubtypeId::RecomposeLayout => "recompose.layout",
        }
    }

    /// Only widgets may float without any target.
    pub fn allows_no_targets(&self) -> bool {
        *self == SubtypeId::InsertWidget
    }
}

impl fmt::Display for SubtypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SubtypeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubtypeId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// User difficulty types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ChallengeCategory {
    What,
    Where,
    How,
    Why,
    Next,
    Can,
}

impl ChallengeCategory {
    pub const ALL: [ChallengeCategory; 6] = [
        ChallengeCategory::What,
        ChallengeCategory::Where,
        ChallengeCategory::How,
        ChallengeCategory::Why,
        ChallengeCategory::Next,
        ChallengeCategory::Can,
    ];
}

impl FromStr for ChallengeCategory {
    type Err = String;

    /// Accepts the category names and the generator-facing aliases
    /// (Meaning, Location, Procedure, Behavior, Direction, Capability).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "WHAT" | "MEANING" => Ok(ChallengeCategory::What),
            "WHERE" | "LOCATION" => Ok(ChallengeCategory::Where),
            "HOW" | "PROCEDURE" => Ok(ChallengeCategory::How),
            "WHY" | "BEHAVIOR" | "BEHAVIOUR" => Ok(ChallengeCategory::Why),
            "NEXT" | "DIRECTION" => Ok(ChallengeCategory::Next),
            "CAN" | "CAPABILITY" => Ok(ChallengeCategory::Can),
            _ => Err(s.to_string()),
        }
    }
}

/// A semantic reference to an element, `"[<role>] <label>"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UiTarget {
    pub ui_description: String,
}

impl UiTarget {
    pub fn new(description: impl Into<String>) -> Self {
        Self { ui_description: description.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseOrigin {
    HandbookGenerated,
    FallbackGenerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistanceCase {
    pub case_id: String,
    pub assistance: String,
    pub rationale: String,
    pub subtype: SubtypeId,
    pub targets: Vec<UiTarget>,
    pub configuration: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<ChallengeCategory>,
    #[serde(default)]
    pub feedback: i64,
    pub origin: CaseOrigin,
}

impl AssistanceCase {
    /// Re-checks the structural invariants against the stored subtype.
    pub fn revalidate(&self) -> Result<(), RejectReason> {
        check_targets(self.subtype, &self.targets)?;
        parse_config(self.subtype, &self.configuration, &self.targets)
            .map(|_| ())
            .map_err(RejectReason::BadConfiguration)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RejectReason {
    #[error("unknown subtype {0:?}")]
    UnknownSubtype(String),
    #[error("target {0:?} is not in the element list")]
    UnlistedTarget(String),
    #[error("bad configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    BadConfiguration(Vec<Violation>),
    #[error("missing field {0}")]
    MissingField(String),
}

impl RejectReason {
    pub fn kind(&self) -> &'static str {
        match self {
            RejectReason::UnknownSubtype(_) => "UnknownSubtype",
            RejectReason::UnlistedTarget(_) => "UnlistedTarget",
            RejectReason::BadConfiguration(_) => "BadConfiguration",
            RejectReason::MissingField(_) => "MissingField",
        }
    }
}

fn check_targets(subtype: SubtypeId, targets: &[UiTarget]) -> Result<(), RejectReason> {
    if targets.is_empty() && !subtype.allows_no_targets() {
        return Err(RejectReason::MissingField("targets".into()));
    }
    if targets.iter().any(|t| t.ui_description.trim().is_empty()) {
        return Err(RejectReason::MissingField("targets[].uiDescription".into()));
    }
    Ok(())
}

fn text_field(raw: &Value, names: &[&str]) -> Result<String, RejectReason> {
    names
        .iter()
        .find_map(|n| raw.get(*n).and_then(Value::as_str))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .ok_or_else(|| RejectReason::MissingField(names[0].to_string()))
}

/// A generator-produced case that passed validation; ids are assigned when
/// it enters a handbook.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedCase {
    pub assistance: String,
    pub rationale: String,
    pub subtype: SubtypeId,
    pub targets: Vec<UiTarget>,
    pub configuration: Value,
    pub category: Option<ChallengeCategory>,
}

impl ValidatedCase {
    pub fn into_case(self, case_id: String, origin: CaseOrigin) -> AssistanceCase {
        AssistanceCase {
            case_id,
            assistance: self.assistance,
            rationale: self.rationale,
            subtype: self.subtype,
            targets: self.targets,
            configuration: self.configuration,
            category: self.category,
            feedback: 0,
            origin,
        }
    }
}

/// Validates one raw generator case (`assistance`, `whyItHelps`,
/// `domSubtype`, `configuration`, `targets[].uiDescription`, optional
/// `category`) against the element listing it was generated from.
pub fn validate_case(raw: &Value, elements: &[UiElement]) -> Result<ValidatedCase, RejectReason> {
    if !raw.is_object() {
        return Err(RejectReason::MissingField("case object".into()));
    }
    let assistance = text_field(raw, &["assistance"])?;
    let rationale = text_field(raw, &["whyItHelps", "rationale"])?;
    let subtype_raw = text_field(raw, &["domSubtype", "subtype"])?;
    let subtype: SubtypeId = subtype_raw.parse().map_err(RejectReason::UnknownSubtype)?;
    let configuration = raw
        .get("configuration")
        .filter(|v| !v.is_null())
        .cloned()
        .ok_or_else(|| RejectReason::MissingField("configuration".into()))?;
    let targets_raw = raw
        .get("targets")
        .and_then(Value::as_array)
        .ok_or_else(|| RejectReason::MissingField("targets".into()))?;
    let mut targets = Vec::with_capacity(targets_raw.len());
    for t in targets_raw {
        let desc = t
            .get("uiDescription")
            .or_else(|| t.get("ui_description"))
            .and_then(Value::as_str)
            .or_else(|| t.as_str())
            .ok_or_else(|| RejectReason::MissingField("targets[].uiDescription".into()))?;
        targets.push(UiTarget::new(desc));
    }
    check_targets(subtype, &targets)?;
    let listed: HashSet<String> = elements.iter().map(UiElement::target_form).collect();
    if let Some(t) = targets.iter().find(|t| !listed.contains(&t.ui_description)) {
        return Err(RejectReason::UnlistedTarget(t.ui_description.clone()));
    }
    parse_config(subtype, &configuration, &targets).map_err(RejectReason::BadConfiguration)?;
    let category = raw
        .get("category")
        .and_then(Value::as_str)
        .and_then(|c| c.parse().ok());
    Ok(ValidatedCase {
        assistance,
        rationale,
        subtype,
        targets,
        configuration,
        category,
    })
}
