//! Typed, per-subtype views of a case's free-form `configuration` object.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::handbook::case::{SubtypeId, UiTarget};

/// Style properties a plan may touch. Anything that could hide or remove an
/// element is absent on purpose.
pub const ALLOWED_STYLE_PROPERTIES: &[&str] = &[
    "color",
    "background",
    "border",
    "opacity",
    "outline",
    "font-size",
    "animation-pulse",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    MissingField { field: String },
    BadValue { field: String, reason: String },
    DisallowedProperty { property: String },
    TargetCount { expected: String, found: usize },
    UnknownTargetInConfig { target: String },
    CrossParentReorder,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingField { field } => write!(f, "missing {field}"),
            Violation::BadValue { field, reason } => write!(f, "{field}: {reason}"),
            Violation::DisallowedProperty { property } => {
                write!(f, "style property {property:?} is not allowed")
            }
            Violation::TargetCount { expected, found } => {
                write!(f, "expected {expected} targets, found {found}")
            }
            Violation::UnknownTargetInConfig { target } => {
                write!(f, "{target:?} is referenced in the configuration but is not a target")
            }
            Violation::CrossParentReorder => f.write_str("reorder targets do not share a parent"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TipPlacement {
    Above,
    Below,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlType {
    SearchInput,
    Button,
    Toggle,
    Slider,
}

/// Where an inline control goes relative to its anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InlinePlacement {
    Before,
    After,
    Inside,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidgetAction {
    SaveSnapshot,
    Dismiss,
    EmitEvent(String),
}

impl WidgetAction {
    pub fn as_attr(&self) -> String {
        match self {
            WidgetAction::SaveSnapshot => "save_snapshot".into(),
            WidgetAction::Dismiss => "dismiss".into(),
            WidgetAction::EmitEvent(name) => format!("emit_event:{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidgetControl {
    pub label: String,
    pub action: WidgetAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    Text,
    Number,
    Slider,
    ColorPicker,
    Stepper,
}

impl Modality {
    /// The `input` type attribute the modality maps to.
    pub fn input_type(&self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Number => "number",
            Modality::Slider => "range",
            Modality::ColorPicker => "color",
            Modality::Stepper => "number",
        }
    }
}

const MODALITY_PAIRS: &[(Modality, Modality)] = &[
    (Modality::Text, Modality::Slider),
    (Modality::Text, Modality::ColorPicker),
    (Modality::Number, Modality::Stepper),
];

#[derive(Debug, Clone, PartialEq)]
pub enum SubtypeConfig {
    OverlayTip {
        tip_text: String,
        placement: TipPlacement,
    },
    InlineControl {
        control_type: ControlType,
        label: String,
        placeholder: Option<String>,
        action: String,
        placement: InlinePlacement,
    },
    Widget {
        title: String,
        body: String,
        controls: Vec<WidgetControl>,
    },
    Style {
        properties: BTreeMap<String, String>,
    },
    Representation {
        from: Modality,
        to: Modality,
    },
    /// New text per target description.
    Reframe {
        new_text: BTreeMap<String, String>,
    },
    Reorder {
        order: Vec<String>,
    },
    Group {
        group_label: String,
    },
    Layout {
        order: Vec<String>,
    },
}

struct Checker<'a> {
    config: &'a Value,
    violations: Vec<Violation>,
}

impl<'a> Checker<'a> {
    fn field(&self, name: &str) -> Option<&'a Value> {
        self.config.get(name).filter(|v| !v.is_null())
    }

    fn text(&mut self, names: &[&str]) -> Option<String> {
        let found = names.iter().find_map(|n| self.field(n));
        match found {
            None => {
                self.violations.push(Violation::MissingField { field: names[0].into() });
                None
            }
            Some(v) => match v.as_str().map(str::trim) {
                Some(s) if !s.is_empty() => Some(s.to_string()),
                _ => {
                    self.bad(names[0], "must be a non-empty string");
                    None
                }
            },
        }
    }

    fn enumerated<T: serde::de::DeserializeOwned>(&mut self, names: &[&str], default: Option<T>) -> Option<T> {
        match names.iter().find_map(|n| self.field(n)) {
            None if default.is_some() => default,
            None => {
                self.violations.push(Violation::MissingField { field: names[0].into() });
                None
            }
            Some(v) => match serde_json::from_value(v.clone()) {
                Ok(t) => Some(t),
                Err(_) => {
                    self.bad(names[0], &format!("unsupported value {v}"));
                    None
                }
            },
        }
    }

    fn bad(&mut self, field: &str, reason: &str) {
        self.violations.push(Violation::BadValue {
            field: field.into(),
            reason: reason.into(),
        });
    }

    fn target_count(&mut self, targets: &[UiTarget], min: usize) {
        if targets.len() < min {
            self.violations.push(Violation::TargetCount {
                expected: format!("at least {min}"),
                found: targets.len(),
            });
        }
    }

    /// `order` must list each target exactly once.
    fn order(&mut self, targets: &[UiTarget]) -> Option<Vec<String>> {
        let Some(raw) = self.field("order") else {
            self.violations.push(Violation::MissingField { field: "order".into() });
            return None;
        };
        let Some(items) = raw.as_array() else {
            self.bad("order", "must be an array of target descriptions");
            return None;
        };
        let mut order = Vec::with_capacity(items.len());
        for item in items {
            let desc = item
                .as_str()
                .or_else(|| item.get("uiDescription").and_then(Value::as_str));
            match desc {
                Some(d) => order.push(d.to_string()),
                None => {
                    self.bad("order", "entries must be target descriptions");
                    return None;
                }
            }
        }
        let wanted: BTreeSet<&str> = targets.iter().map(|t| t.ui_description.as_str()).collect();
        for d in &order {
            if !wanted.contains(d.as_str()) {
                self.violations.push(Violation::UnknownTargetInConfig { target: d.clone() });
            }
        }
        let listed: BTreeSet<&str> = order.iter().map(String::as_str).collect();
        if listed.len() != order.len() || order.len() != targets.len() || listed != wanted {
            self.bad("order", "must list every target exactly once");
        }
        Some(order)
    }
}

/// Checks a configuration against its subtype and target list. Structural
/// constraints that need a snapshot (shared parents, nesting) are checked
/// at compile time.
pub fn parse_config(
    subtype: SubtypeId,
    config: &Value,
    targets: &[UiTarget],
) -> Result<SubtypeConfig, Vec<Violation>> {
    if !config.is_object() {
        return Err(vec![Violation::BadValue {
            field: "configuration".into(),
            reason: "must be an object".into(),
        }]);
    }
    let mut c = Checker { config, violations: Vec::new() };
    let parsed = match subtype {
        SubtypeId::InsertOverlayTip => {
            c.target_count(targets, 1);
            let tip_text = c.text(&["tip_text", "tipText", "text"]);
            let placement = c.enumerated(&["placement"], Some(TipPlacement::Below));
            tip_text.zip(placement).map(|(tip_text, placement)| SubtypeConfig::OverlayTip { tip_text, placement })
        }
        SubtypeId::InsertInlineControl => {
            c.target_count(targets, 1);
            let placement = match c.field("placement").and_then(Value::as_str) {
                None | Some("adjacent") | Some("after") => Some(InlinePlacement::After),
                Some("before") => Some(InlinePlacement::Before),
                Some("inside") => Some(InlinePlacement::Inside),
                Some(other) => {
                    c.bad("placement", &format!("unsupported value {other:?}"));
                    None
                }
            };
            // Control fields may sit at the top level or in `detail`.
            let mut merged = config.as_object().cloned().unwrap_or_default();
            if let Some(detail) = config.get("detail").and_then(Value::as_object) {
                for (k, v) in detail {
                    merged.insert(k.clone(), v.clone());
                }
            }
            let merged = Value::Object(merged);
            let mut d = Checker { config: &merged, violations: Vec::new() };
            let control_type = d.enumerated::<ControlType>(&["controlType", "control_type"], None);
            let label = d.text(&["label"]);
            let placeholder = d.field("placeholder").and_then(Value::as_str).map(str::to_string);
            let action = match d.field("action") {
                Some(Value::String(s)) if !s.trim().is_empty() => Some(s.trim().to_string()),
                Some(v @ Value::Object(_)) => match v.get("type").and_then(Value::as_str) {
                    Some(t) if !t.trim().is_empty() => Some(t.trim().to_string()),
                    _ => {
                        d.bad("action", "object form needs a non-empty \"type\"");
                        None
                    }
                },
                Some(_) => {
                    d.bad("action", "must be a string or {\"type\": ...}");
                    None
                }
                None => {
                    d.violations.push(Violation::MissingField { field: "action".into() });
                    None
                }
            };
            c.violations.extend(d.violations);
            match (control_type, label, action, placement) {
                (Some(control_type), Some(label), Some(action), Some(placement)) => Some(SubtypeConfig::InlineControl {
                    control_type,
                    label,
                    placeholder,
                    action,
                    placement,
                }),
                _ => None,
            }
        }
        SubtypeId::InsertWidget => {
            let title = c.text(&["title"]);
            let body = c.text(&["body"]);
            let controls = match c.field("controls") {
                None => {
                    c.violations.push(Violation::MissingField { field: "controls".into() });
                    None
                }
                Some(v) => match serde_json::from_value::<Vec<WidgetControl>>(v.clone()) {
                    Ok(controls) if controls.is_empty() => {
                        c.bad("controls", "a widget needs at least one control");
                        None
                    }
                    Ok(controls) if controls.iter().all(|w| !w.label.trim().is_empty()) => Some(controls),
                    Ok(_) => {
                        c.bad("controls", "every control needs a label");
                        None
                    }
                    Err(_) => {
                        c.bad("controls", "controls need a label and an action of save_snapshot, dismiss or {\"emit_event\": name}");
                        None
                    }
                },
            };
            match (title, body, controls) {
                (Some(title), Some(body), Some(controls)) => Some(SubtypeConfig::Widget { title, body, controls }),
                _ => None,
            }
        }
        SubtypeId::MutateStyle => {
            c.target_count(targets, 1);
            match c.field("properties").and_then(Value::as_object) {
                None => {
                    c.violations.push(Violation::MissingField { field: "properties".into() });
                    None
                }
                Some(props) if props.is_empty() => {
                    c.bad("properties", "must set at least one property");
                    None
                }
                Some(props) => {
                    let mut properties = BTreeMap::new();
                    for (k, v) in props {
                        if !ALLOWED_STYLE_PROPERTIES.contains(&k.as_str()) {
                            c.violations.push(Violation::DisallowedProperty { property: k.clone() });
                            continue;
                        }
                        let value = match v {
                            Value::String(s) => s.trim().to_string(),
                            Value::Number(n) => n.to_string(),
                            _ => String::new(),
                        };
                        if value.is_empty() || value.contains(';') {
                            c.bad(k, "value must be a plain non-empty string");
                            continue;
                        }
                        if k == "opacity" && value.parse::<f64>().map(|o| o < 0.2).unwrap_or(true) {
                            c.bad(k, "opacity must be a number of at least 0.2");
                            continue;
                        }
                        properties.insert(k.clone(), value);
                    }
                    Some(SubtypeConfig::Style { properties })
                }
            }
        }
        SubtypeId::MutateRepresentation => {
            c.target_count(targets, 1);
            let from = c.enumerated::<Modality>(&["from_modality", "fromModality", "from"], None);
            let to = c.enumerated::<Modality>(&["to_modality", "toModality", "to"], None);
            match (from, to) {
                (Some(from), Some(to)) if MODALITY_PAIRS.contains(&(from, to)) => {
                    Some(SubtypeConfig::Representation { from, to })
                }
                (Some(_), Some(_)) => {
                    c.bad("to_modality", "unsupported modality pair");
                    None
                }
                _ => None,
            }
        }
        SubtypeId::MutateReframe => {
            c.target_count(targets, 1);
            match c.field("new_text").or_else(|| c.field("newText")) {
                Some(Value::String(s)) if !s.trim().is_empty() && targets.len() == 1 => {
                    let mut new_text = BTreeMap::new();
                    new_text.insert(targets[0].ui_description.clone(), s.trim().to_string());
                    Some(SubtypeConfig::Reframe { new_text })
                }
                Some(Value::String(_)) => {
                    c.bad("new_text", "a single string needs exactly one target and non-empty text");
                    None
                }
                Some(Value::Object(map)) => {
                    let mut new_text = BTreeMap::new();
                    for (k, v) in map {
                        if !targets.iter().any(|t| &t.ui_description == k) {
                            c.violations.push(Violation::UnknownTargetInConfig { target: k.clone() });
                        }
                        match v.as_str().map(str::trim) {
                            Some(s) if !s.is_empty() => {
                                new_text.insert(k.clone(), s.to_string());
                            }
                            _ => c.bad("new_text", "replacement text must be non-empty"),
                        }
                    }
                    if targets.iter().any(|t| !new_text.contains_key(&t.ui_description)) {
                        c.bad("new_text", "every target needs replacement text");
                    }
                    Some(SubtypeConfig::Reframe { new_text })
                }
                Some(_) => {
                    c.bad("new_text", "must be a string or a map");
                    None
                }
                None => {
                    c.violations.push(Violation::MissingField { field: "new_text".into() });
                    None
                }
            }
        }
        SubtypeId::RecomposeReorder => {
            c.target_count(targets, 2);
            c.order(targets).map(|order| SubtypeConfig::Reorder { order })
        }
        SubtypeId::RecomposeGroup => {
            c.target_count(targets, 2);
            c.text(&["group_label", "groupLabel", "label"])
                .map(|group_label| SubtypeConfig::Group { group_label })
        }
        SubtypeId::RecomposeLayout => {
            c.target_count(targets, 2);
            c.order(targets).map(|order| SubtypeConfig::Layout { order })
        }
    };
    if !c.violations.is_empty() {
        return Err(c.violations);
    }
    let mut seen = BTreeSet::new();
    if targets.iter().any(|t| !seen.insert(&t.ui_description)) {
        return Err(vec![Violation::BadValue {
            field: "targets".into(),
            reason: "duplicate target".into(),
        }]);
    }
    parsed.ok_or_else(|| {
        vec![Violation::BadValue {
            field: "configuration".into(),
            reason: "incomplete".into(),
        }]
    })
}
