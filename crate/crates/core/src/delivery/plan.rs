//! Delivery plans: ordered, invertible DOM operations compiled from a
//! grounded case.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::config::{parse_config, ControlType, InlinePlacement, SubtypeConfig, TipPlacement, Violation};
use super::DeliveryError;
use crate::dom_model::{DomSnapshot, NodeId};
use crate::grounding::GroundedTarget;
use crate::handbook::{AssistanceCase, SubtypeId};

/// Gap between an anchor and its floating overlay, in CSS pixels.
pub const OVERLAY_GAP: f64 = 8.0;
pub const TIP_SIZE: (f64, f64) = (240.0, 48.0);
pub const WIDGET_SIZE: (f64, f64) = (320.0, 200.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Placement {
    AdjacentBefore,
    AdjacentAfter,
    AppendChild,
    /// Offset of the overlay's top-left corner from the anchor's.
    FloatingAnchor { dx: f64, dy: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub tag: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    #[serde(default)]
    pub style: BTreeMap<String, String>,
    #[serde(default)]
    pub children: Vec<NodeSpec>,
    pub placement: Placement,
}

impl NodeSpec {
    pub fn new(tag: &str, placement: Placement) -> Self {
        Self {
            tag: tag.into(),
            text: String::new(),
            attributes: BTreeMap::new(),
            style: BTreeMap::new(),
            children: Vec::new(),
            placement,
        }
    }

    fn child(tag: &str) -> Self {
        Self::new(tag, Placement::AppendChild)
    }

    fn text(mut self, text: impl Into<String>) -> Self {
        self.text = text.into();
        self
    }

    fn attr(mut self, k: &str, v: impl Into<String>) -> Self {
        self.attributes.insert(k.into(), v.into());
        self
    }

    fn with_child(mut self, c: NodeSpec) -> Self {
        self.children.push(c);
        self
    }

    /// Number of nodes this spec creates.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(NodeSpec::size).sum::<usize>()
    }
}

/// A node that either existed before the plan or was created by the
/// operation with the given sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeRef {
    Existing(NodeId),
    Created { created: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleChange {
    pub old: Option<String>,
    pub new: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum OpBody {
    CreateNode(NodeSpec),
    SetText {
        old: String,
        new: String,
    },
    /// CSS property → change, applied to the `style` attribute.
    SetStyle(BTreeMap<String, StyleChange>),
    SetAttribute {
        name: String,
        old: Option<String>,
        new: String,
    },
    MoveNode {
        old_parent: NodeId,
        old_position: usize,
        new_parent: NodeRef,
        new_position: usize,
    },
    AnchorOverlay(NodeSpec),
    MountWidget(NodeSpec),
}

impl OpBody {
    pub fn kind(&self) -> &'static str {
        match self {
            OpBody::CreateNode(_) => "create_node",
            OpBody::SetText { .. } => "set_text",
            OpBody::SetStyle(_) => "set_style",
            OpBody::SetAttribute { .. } => "set_attribute",
            OpBody::MoveNode { .. } => "move_node",
            OpBody::AnchorOverlay(_) => "anchor_overlay",
            OpBody::MountWidget(_) => "mount_widget",
        }
    }

    pub fn created_spec(&self) -> Option<&NodeSpec> {
        match self {
            OpBody::CreateNode(s) | OpBody::AnchorOverlay(s) | OpBody::MountWidget(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomOperation {
    /// The node operated on, or the anchor for created nodes. Absent for a
    /// widget floating over the page.
    pub target: Option<NodeId>,
    #[serde(flatten)]
    pub body: OpBody,
    pub seq: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryPlan {
    pub plan_id: String,
    pub case_id: String,
    pub subtype: SubtypeId,
    pub ops: Vec<DomOperation>,
    pub grounded: Vec<GroundedTarget>,
}

impl DeliveryPlan {
    pub fn tag_value(&self, seq: u32) -> String {
        tag_value(&self.plan_id, seq)
    }
}

pub fn tag_value(plan_id: &str, seq: u32) -> String {
    format!("{plan_id}:{seq}")
}

/// Splits a tag value into plan id and sequence number.
pub fn parse_tag(value: &str) -> Option<(&str, u32)> {
    let (plan, seq) = value.rsplit_once(':')?;
    if plan.is_empty() {
        return None;
    }
    Some((plan, seq.parse().ok()?))
}

/// Parses a `style` attribute into ordered (property, value) pairs.
pub fn parse_style(style: &str) -> Vec<(String, String)> {
    style
        .split(';')
        .filter_map(|decl| {
            let (k, v) = decl.split_once(':')?;
            let k = k.trim();
            (!k.is_empty()).then(|| (k.to_string(), v.trim().to_string()))
        })
        .collect()
}

pub fn render_style(decls: &[(String, String)]) -> String {
    decls
        .iter()
        .map(|(k, v)| format!("{k}: {v}"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Maps a configured style property to the CSS property and value written.
pub fn css_declaration(property: &str, value: &str) -> (String, String) {
    if property == "animation-pulse" {
        ("animation".into(), format!("insitu-pulse {value} ease-in-out infinite"))
    } else {
        (property.into(), value.into())
    }
}

struct Builder<'a> {
    snapshot: &'a DomSnapshot,
    parents: Vec<Option<NodeId>>,
    ops: Vec<DomOperation>,
}

impl<'a> Builder<'a> {
    fn push(&mut self, target: Option<NodeId>, body: OpBody) -> u32 {
        let seq = self.ops.len() as u32;
        self.ops.push(DomOperation { target, body, seq });
        seq
    }

    fn parent(&self, id: NodeId) -> Result<NodeId, DeliveryError> {
        self.parents[id as usize]
            .ok_or_else(|| DeliveryError::Compile(format!("node {id} is the document root and has no siblings")))
    }

    fn require_independent(&self, ids: &[NodeId]) -> Result<(), DeliveryError> {
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                if a == b {
                    return Err(DeliveryError::Compile(format!("two targets resolve to node {a}")));
                }
                if self.snapshot.is_ancestor(a, b) || self.snapshot.is_ancestor(b, a) {
                    return Err(DeliveryError::Compile(format!(
                        "targets {a} and {b} are nested; one would move into the other"
                    )));
                }
            }
        }
        if ids.contains(&0) {
            return Err(DeliveryError::Compile("the document root cannot be moved".into()));
        }
        Ok(())
    }

    /// Emits one move per target so that each parent's children end up in
    /// `finals` order. Targets are placed right to left, each directly before
    /// its successor in the final arrangement, so non-targets never move.
    fn arrange(&mut self, finals: &BTreeMap<NodeId, Vec<NodeId>>, targets: &[NodeId]) {
        let mut children: HashMap<NodeId, Vec<NodeId>> = self
            .snapshot
            .nodes
            .iter()
            .map(|n| (n.id, n.children.clone()))
            .collect();
        let mut placements: Vec<(NodeId, NodeId, Option<NodeId>)> = Vec::new();
        for (&parent, list) in finals {
            for (i, &id) in list.iter().enumerate() {
                if targets.contains(&id) {
                    placements.push((id, parent, list.get(i + 1).copied()));
                }
            }
        }
        // Right to left within each parent.
        placements.reverse();
        for (id, new_parent, successor) in placements {
            let old_parent = self.parents[id as usize].expect("targets are not the root");
            let old_list = children.get_mut(&old_parent).expect("parent exists");
            let old_position = old_list.iter().position(|&c| c == id).expect("child listed");
            old_list.remove(old_position);
            let new_list = children.get_mut(&new_parent).expect("parent exists");
            let new_position = successor
                .and_then(|s| new_list.iter().position(|&c| c == s))
                .unwrap_or(new_list.len());
            new_list.insert(new_position, id);
            self.parents[id as usize] = Some(new_parent);
            self.push(
                Some(id),
                OpBody::MoveNode {
                    old_parent,
                    old_position,
                    new_parent: NodeRef::Existing(new_parent),
                    new_position,
                },
            );
        }
    }
}

fn floating_offset(placement: TipPlacement, anchor_w: f64, anchor_h: f64, size: (f64, f64)) -> (f64, f64) {
    match placement {
        TipPlacement::Below => (0.0, anchor_h + OVERLAY_GAP),
        TipPlacement::Above => (0.0, -(size.1 + OVERLAY_GAP)),
        TipPlacement::Right => (anchor_w + OVERLAY_GAP, 0.0),
        TipPlacement::Left => (-(size.0 + OVERLAY_GAP), 0.0),
    }
}

fn inline_control_spec(control_type: ControlType, label: &str, placeholder: Option<&str>, action: &str, placement: Placement) -> NodeSpec {
    let base = match control_type {
        ControlType::SearchInput => {
            let s = NodeSpec::new("input", placement)
                .attr("type", "search")
                .attr("aria-label", label);
            match placeholder {
                Some(p) => s.attr("placeholder", p),
                None => s.attr("placeholder", label),
            }
        }
        ControlType::Button => NodeSpec::new("button", placement).text(label),
        ControlType::Toggle => NodeSpec::new("label", placement)
            .text(label)
            .with_child(NodeSpec::child("input").attr("type", "checkbox")),
        ControlType::Slider => NodeSpec::new("input", placement)
            .attr("type", "range")
            .attr("aria-label", label),
    };
    base.attr("data-insitu-action", action)
}

fn widget_spec(title: &str, body: &str, controls: &[super::config::WidgetControl], placement: Placement) -> NodeSpec {
    let mut spec = NodeSpec::new("aside", placement)
        .attr("role", "dialog")
        .attr("aria-label", title)
        .with_child(NodeSpec::child("h3").text(title))
        .with_child(NodeSpec::child("div").attr("data-format", "markdown").text(body));
    for c in controls {
        spec = spec.with_child(
            NodeSpec::child("button")
                .text(&c.label)
                .attr("data-insitu-action", c.action.as_attr()),
        );
    }
    spec
}

/// Grounded node for each case target, in target order.
fn resolve_targets(case: &AssistanceCase, grounded: &[GroundedTarget], snapshot: &DomSnapshot) -> Result<Vec<NodeId>, DeliveryError> {
    case.targets
        .iter()
        .map(|t| {
            let g = grounded
                .iter()
                .find(|g| g.ui_description == t.ui_description)
                .ok_or_else(|| DeliveryError::UngroundedTarget(t.ui_description.clone()))?;
            if snapshot.node(g.node_id).is_none() {
                return Err(DeliveryError::StaleTarget(g.node_id));
            }
            Ok(g.node_id)
        })
        .collect()
}

/// Checks the constraints that need grounded nodes: reorder targets must
/// share a parent.
pub fn validate_grounded(case: &AssistanceCase, grounded: &[GroundedTarget], snapshot: &DomSnapshot) -> Vec<Violation> {
    let mut violations = match parse_config(case.subtype, &case.configuration, &case.targets) {
        Ok(_) => Vec::new(),
        Err(v) => v,
    };
    if case.subtype == SubtypeId::RecomposeReorder {
        if let Ok(ids) = resolve_targets(case, grounded, snapshot) {
            let parents = snapshot.parents();
            let first = ids.first().and_then(|&i| parents[i as usize]);
            if ids.iter().any(|&i| parents[i as usize] != first) {
                violations.push(Violation::CrossParentReorder);
            }
        }
    }
    violations
}

/// Compiles a grounded case against the snapshot it was grounded on.
pub fn compile_plan(
    case: &AssistanceCase,
    grounded: &[GroundedTarget],
    snapshot: &DomSnapshot,
    plan_id: &str,
) -> Result<DeliveryPlan, DeliveryError> {
    if plan_id.is_empty() || plan_id.contains(':') {
        return Err(DeliveryError::Compile(format!("plan id {plan_id:?} must be non-empty and free of ':'")));
    }
    let config = parse_config(case.subtype, &case.configuration, &case.targets).map_err(DeliveryError::InvalidConfig)?;
    let ids = resolve_targets(case, grounded, snapshot)?;
    let mut b = Builder {
        snapshot,
        parents: snapshot.parents(),
        ops: Vec::new(),
    };
    match config {
        SubtypeConfig::OverlayTip { tip_text, placement } => {
            let anchor = ids[0];
            let (w, h) = snapshot.node(anchor).and_then(|n| n.bbox).map(|b| (b.width, b.height)).unwrap_or((0.0, 0.0));
            let (dx, dy) = floating_offset(placement, w, h, TIP_SIZE);
            let spec = NodeSpec::new("div", Placement::FloatingAnchor { dx, dy })
                .text(tip_text)
                .attr("role", "tooltip")
                .attr("data-insitu-placement", serde_json::to_value(placement).unwrap().as_str().unwrap_or("below"));
            b.push(Some(anchor), OpBody::AnchorOverlay(spec));
        }
        SubtypeConfig::InlineControl { control_type, label, placeholder, action, placement } => {
            let anchor = ids[0];
            let placement = match placement {
                InlinePlacement::Before => Placement::AdjacentBefore,
                InlinePlacement::After => Placement::AdjacentAfter,
                InlinePlacement::Inside => Placement::AppendChild,
            };
            if placement != Placement::AppendChild {
                b.parent(anchor)?;
            }
            let spec = inline_control_spec(control_type, &label, placeholder.as_deref(), &action, placement);
            b.push(Some(anchor), OpBody::CreateNode(spec));
        }
        SubtypeConfig::Widget { title, body, controls } => {
            let (anchor, offset) = match ids.first() {
                Some(&id) => {
                    let h = snapshot.node(id).and_then(|n| n.bbox).map(|b| b.height).unwrap_or(0.0);
                    (Some(id), (0.0, h + OVERLAY_GAP))
                }
                None => {
                    let w = snapshot.root().bbox.map(|b| b.width).unwrap_or(WIDGET_SIZE.0);
                    (None, ((w - WIDGET_SIZE.0 - 16.0).max(0.0), 16.0))
                }
            };
            let spec = widget_spec(&title, &body, &controls, Placement::FloatingAnchor { dx: offset.0, dy: offset.1 });
            b.push(anchor, OpBody::MountWidget(spec));
        }
        SubtypeConfig::Style { properties } => {
            for &id in &ids {
                let node = snapshot.node(id).expect("resolved");
                let current = parse_style(node.attr("style").unwrap_or(""));
                let changes: BTreeMap<String, StyleChange> = properties
                    .iter()
                    .map(|(k, v)| {
                        let (prop, value) = css_declaration(k, v);
                        let old = current.iter().find(|(p, _)| *p == prop).map(|(_, v)| v.clone());
                        (prop, StyleChange { old, new: value })
                    })
                    .collect();
                b.push(Some(id), OpBody::SetStyle(changes));
            }
        }
        SubtypeConfig::Representation { to, .. } => {
            let id = ids[0];
            let node = snapshot.node(id).expect("resolved");
            let mut attrs = vec![("type", to.input_type().to_string())];
            match to {
                super::config::Modality::Slider => {
                    attrs.push(("min", "0".into()));
                    attrs.push(("max", "100".into()));
                }
                super::config::Modality::Stepper => attrs.push(("step", "1".into())),
                _ => {}
            }
            attrs.push(("data-insitu-modality", serde_json::to_value(to).unwrap().as_str().unwrap_or("").to_string()));
            for (name, new) in attrs {
                let old = node.attr(name).map(str::to_string);
                b.push(Some(id), OpBody::SetAttribute { name: name.into(), old, new });
            }
        }
        SubtypeConfig::Reframe { new_text } => {
            for (t, &id) in case.targets.iter().zip(&ids) {
                let node = snapshot.node(id).expect("resolved");
                let new = new_text[&t.ui_description].clone();
                b.push(Some(id), OpBody::SetText { old: node.text.clone(), new });
            }
        }
        SubtypeConfig::Reorder { order } | SubtypeConfig::Layout { order } => {
            b.require_independent(&ids)?;
            let node_of: HashMap<&str, NodeId> = case
                .targets
                .iter()
                .zip(&ids)
                .map(|(t, &id)| (t.ui_description.as_str(), id))
                .collect();
            if case.subtype == SubtypeId::RecomposeReorder {
                let first = b.parents[ids[0] as usize];
                if ids.iter().any(|&i| b.parents[i as usize] != first) {
                    return Err(DeliveryError::InvalidConfig(vec![Violation::CrossParentReorder]));
                }
            }
            // Slots are the current positions of the targets in document
            // order; order[i] fills slot i.
            let doc: Vec<NodeId> = snapshot.document_order();
            let mut slots: Vec<NodeId> = ids.clone();
            slots.sort_by_key(|id| doc.iter().position(|d| d == id));
            let mut finals: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
            for &id in &ids {
                let p = b.parents[id as usize].expect("not root");
                finals.entry(p).or_insert_with(|| snapshot.node(p).unwrap().children.clone());
            }
            let mut replaced: BTreeMap<NodeId, Vec<NodeId>> = finals.clone();
            for (slot, desc) in slots.iter().zip(&order) {
                let p = b.parents[*slot as usize].unwrap();
                let pos = finals[&p].iter().position(|c| c == slot).unwrap();
                replaced.get_mut(&p).unwrap()[pos] = node_of[desc.as_str()];
            }
            b.arrange(&replaced, &ids);
        }
        SubtypeConfig::Group { group_label } => {
            b.require_independent(&ids)?;
            let doc: Vec<NodeId> = snapshot.document_order();
            let mut members = ids.clone();
            members.sort_by_key(|id| doc.iter().position(|d| d == id));
            b.parent(members[0])?;
            let spec = NodeSpec::new("div", Placement::AdjacentBefore)
                .attr("role", "group")
                .attr("aria-label", &group_label)
                .with_child(NodeSpec::child("div").attr("data-insitu-role", "group-label").text(&group_label));
            let container = b.push(Some(members[0]), OpBody::CreateNode(spec));
            let mut children: HashMap<NodeId, Vec<NodeId>> =
                snapshot.nodes.iter().map(|n| (n.id, n.children.clone())).collect();
            // Account for the container, inserted just before the first member.
            let first_parent = b.parents[members[0] as usize].expect("checked above");
            let list = children.get_mut(&first_parent).unwrap();
            let at = list.iter().position(|&c| c == members[0]).unwrap();
            list.insert(at, NodeId::MAX);
            for (i, &id) in members.iter().enumerate() {
                let old_parent = b.parents[id as usize].expect("not root");
                let list = children.get_mut(&old_parent).unwrap();
                let old_position = list.iter().position(|&c| c == id).unwrap();
                list.remove(old_position);
                b.push(
                    Some(id),
                    OpBody::MoveNode {
                        old_parent,
                        old_position,
                        new_parent: NodeRef::Created { created: container },
                        new_position: i + 1,
                    },
                );
            }
        }
    }
    Ok(DeliveryPlan {
        plan_id: plan_id.to_string(),
        case_id: case.case_id.clone(),
        subtype: case.subtype,
        ops: b.ops,
        grounded: grounded.to_vec(),
    })
}
