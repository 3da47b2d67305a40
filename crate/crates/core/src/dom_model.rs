//! Serialized DOM snapshots, interactable element extraction, and the
//! descriptor strings used for prompting, grounding and target validation.
//!
//! A snapshot is a flat node array where `nodes[i].id == i` and node `0` is
//! the root. Parsing validates the tree shape; every other operation in the
//! crate may then index nodes directly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::canonical;

/// Node identifier, unique within one snapshot.
pub type NodeId = u32;

/// Dense index over the extracted elements of one snapshot.
pub type ElementIndex = usize;

/// Attribute stamped on every node a delivery plan creates or modifies.
pub const ASSIST_TAG_ATTR: &str = "data-insitu-plan";

const MAX_LABEL_CHARS: usize = 80;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("graph error: {0}")]
    Graph(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    #[serde(rename = "w")]
    pub width: f64,
    #[serde(rename = "h")]
    pub height: f64,
}

impl BoundingBox {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeFlag {
    Visible,
    ClickableHandler,
    PointerCursor,
    Focusable,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomNode {
    pub id: NodeId,
    pub tag: String,
    pub text: String,
    pub attrs: BTreeMap<String, String>,
    pub children: Vec<NodeId>,
    #[serde(default)]
    pub bbox: Option<BoundingBox>,
    pub flags: BTreeSet<NodeFlag>,
}

impl DomNode {
    pub fn new(id: NodeId, tag: impl Into<String>) -> Self {
        Self {
            id,
            tag: tag.into(),
            text: String::new(),
            attrs: BTreeMap::new(),
            children: Vec::new(),
            bbox: None,
            flags: BTreeSet::new(),
        }
    }

    pub fn has_flag(&self, flag: NodeFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.get(name).map(String::as_str)
    }

    fn is_heading(&self) -> bool {
        matches!(self.tag.as_str(), "h1" | "h2" | "h3" | "h4" | "h5" | "h6")
            || self.attr("role") == Some("heading")
    }
}

/// A validated page snapshot. Construct through [`parse_snapshot`] or
/// [`DomSnapshot::from_parts`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomSnapshot {
    pub url: String,
    pub title: String,
    pub captured_at: DateTime<Utc>,
    pub nodes: Vec<DomNode>,
}

/// Parses and validates a snapshot document in the wire schema.
pub fn parse_snapshot(raw: &str) -> Result<DomSnapshot, SnapshotError> {
    let snapshot: DomSnapshot =
        serde_json::from_str(raw).map_err(|e| SnapshotError::Schema(e.to_string()))?;
    DomSnapshot::from_parts(snapshot.url, snapshot.title, snapshot.captured_at, snapshot.nodes)
}

impl DomSnapshot {
    /// Validates the node graph and orders `nodes` by id.
    pub fn from_parts(
        url: String,
        title: String,
        captured_at: DateTime<Utc>,
        mut nodes: Vec<DomNode>,
    ) -> Result<Self, SnapshotError> {
        if nodes.is_empty() {
            return Err(SnapshotError::Graph("snapshot has no nodes".into()));
        }
        nodes.sort_by_key(|n| n.id);
        for (i, node) in nodes.iter_mut().enumerate() {
            if node.id as usize != i {
                return Err(SnapshotError::Graph(format!(
                    "node ids must be contiguous from 0; expected {i}, found {}",
                    node.id
                )));
            }
            if node.tag.trim().is_empty() {
                return Err(SnapshotError::Schema(format!("node {i} has an empty tag")));
            }
            node.tag = node.tag.to_ascii_lowercase();
            if let Some(b) = node.bbox {
                if !(b.width >= 0.0 && b.height >= 0.0) {
                    return Err(SnapshotError::Schema(format!(
                        "node {i} has a negative bounding box extent"
                    )));
                }
            }
        }
        let snapshot = Self { url, title, captured_at, nodes };
        snapshot.validate_graph()?;
        Ok(snapshot)
    }

    /// Checks the tree invariants: dangling ids, multiple parents, cycles and
    /// unreachable nodes are all rejected.
    pub fn validate_graph(&self) -> Result<(), SnapshotError> {
        let n = self.nodes.len();
        let mut parent: Vec<Option<NodeId>> = vec![None; n];
        for node in &self.nodes {
            for &child in &node.children {
                if child as usize >= n {
                    return Err(SnapshotError::Graph(format!(
                        "node {} lists missing child {child}",
                        node.id
                    )));
                }
                if child == 0 {
                    return Err(SnapshotError::Graph(format!(
                        "node {} lists the root as a child",
                        node.id
                    )));
                }
                if let Some(existing) = parent[child as usize] {
                    return Err(SnapshotError::Graph(format!(
                        "node {child} has multiple parents ({existing} and {})",
                        node.id
                    )));
                }
                parent[child as usize] = Some(node.id);
            }
        }
        // Every node has at most one parent; reachability from the root rules
        // out cycles among the remaining nodes.
        let mut seen = vec![false; n];
        let mut stack = vec![0 as NodeId];
        let mut visited = 0usize;
        while let Some(id) = stack.pop() {
            if seen[id as usize] {
                return Err(SnapshotError::Graph(format!("cycle through node {id}")));
            }
            seen[id as usize] = true;
            visited += 1;
            stack.extend(self.nodes[id as usize].children.iter().rev());
        }
        if visited != n {
            let orphan = seen.iter().position(|s| !s).unwrap_or(0);
            return Err(SnapshotError::Graph(format!(
                "node {orphan} is not reachable from the root (cycle or second root)"
            )));
        }
        Ok(())
    }

    pub fn root(&self) -> &DomNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> Option<&DomNode> {
        self.nodes.get(id as usize)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Parent of every node, indexed by id.
    pub fn parents(&self) -> Vec<Option<NodeId>> {
        let mut parent = vec![None; self.nodes.len()];
        for node in &self.nodes {
            for &child in &node.children {
                if let Some(slot) = parent.get_mut(child as usize) {
                    *slot = Some(node.id);
                }
            }
        }
        parent
    }

    pub fn parent_of(&self, id: NodeId) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|n| n.children.contains(&id))
            .map(|n| n.id)
    }

    /// Node ids in document (pre-order) order.
    pub fn document_order(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0 as NodeId];
        while let Some(id) = stack.pop() {
            order.push(id);
            if let Some(node) = self.node(id) {
                stack.extend(node.children.iter().rev());
            }
        }
        order
    }

    /// True when `ancestor` is a proper ancestor of `id`.
    pub fn is_ancestor(&self, ancestor: NodeId, id: NodeId) -> bool {
        let parents = self.parents();
        let mut cur = parents.get(id as usize).copied().flatten();
        while let Some(p) = cur {
            if p == ancestor {
                return true;
            }
            cur = parents[p as usize];
        }
        false
    }

    pub fn to_canonical_json(&self) -> String {
        canonical::to_canonical_string(self).expect("snapshot serializes")
    }

    /// SHA-256 of the canonical form.
    pub fn digest(&self) -> String {
        canonical::sha256_hex(self.to_canonical_json().as_bytes())
    }

    /// Section name for every node: the nearest heading that is an ancestor
    /// or a preceding sibling of the node or one of its ancestors.
    pub fn section_labels(&self) -> BTreeMap<NodeId, String> {
        let mut out = BTreeMap::new();
        let mut stack: Vec<(NodeId, String)> = vec![(0, String::new())];
        while let Some((id, inherited)) = stack.pop() {
            let node = &self.nodes[id as usize];
            if !inherited.is_empty() {
                out.insert(id, inherited.clone());
            }
            let own = if node.is_heading() {
                Some(self.visible_text(id))
            } else {
                None
            };
            let mut current = own.filter(|s| !s.is_empty()).unwrap_or(inherited);
            let mut pending = Vec::with_capacity(node.children.len());
            for &child in &node.children {
                pending.push((child, current.clone()));
                let c = &self.nodes[child as usize];
                if c.is_heading() {
                    let label = self.visible_text(child);
                    if !label.is_empty() {
                        current = label;
                    }
                }
            }
            stack.extend(pending.into_iter().rev());
        }
        out
    }

    /// Collapsed direct text, falling back to the concatenated text of
    /// visible descendants; truncated to the label limit.
    pub fn visible_text(&self, id: NodeId) -> String {
        let node = &self.nodes[id as usize];
        let direct = collapse_ws(&node.text);
        if !direct.is_empty() {
            return truncate_chars(&direct, MAX_LABEL_CHARS);
        }
        let mut parts = Vec::new();
        let mut stack: Vec<NodeId> = node.children.iter().rev().copied().collect();
        while let Some(cid) = stack.pop() {
            let c = &self.nodes[cid as usize];
            if !c.has_flag(NodeFlag::Visible) {
                continue;
            }
            let t = collapse_ws(&c.text);
            if !t.is_empty() {
                parts.push(t);
            }
            stack.extend(c.children.iter().rev());
        }
        truncate_chars(&parts.join(" "), MAX_LABEL_CHARS)
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn truncate_chars(s: &str, max: usize) -> String {
    s.chars().take(max).collect()
}

/// Element roles as they appear inside descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "button")]
    Button,
    #[serde(rename = "link")]
    Link,
    #[serde(rename = "link button")]
    LinkButton,
    #[serde(rename = "control")]
    Control,
    #[serde(rename = "text")]
    Text,
    #[serde(rename = "select-data")]
    SelectData,
    #[serde(rename = "input")]
    Input,
    #[serde(rename = "canvas-region")]
    CanvasRegion,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Button => "button",
            Role::Link => "link",
            Role::LinkButton => "link button",
            Role::Control => "control",
            Role::Text => "text",
            Role::SelectData => "select-data",
            Role::Input => "input",
            Role::CanvasRegion => "canvas-region",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiElement {
    pub index: ElementIndex,
    pub node_id: NodeId,
    pub role: Role,
    pub label: String,
    pub section: String,
    pub descriptor: String,
}

impl UiElement {
    /// `"[<role>] <label>"`, the form targets are written and matched in.
    pub fn target_form(&self) -> String {
        format!("[{}] {}", self.role, self.label)
    }

    /// Target form with the section appended, used as the element-side
    /// embedding text during grounding.
    pub fn grounding_text(&self) -> String {
        if self.section.is_empty() {
            self.target_form()
        } else {
            format!("{} — {}", self.target_form(), self.section)
        }
    }
}

const INTERACTIVE_TAGS: &[&str] = &[
    "a", "button", "input", "select", "textarea", "option", "summary", "label",
];
const INTERACTIVE_ROLES: &[&str] = &[
    "button", "link", "checkbox", "radio", "slider", "tab", "menuitem", "combobox",
];

fn is_displayed(node: &DomNode) -> bool {
    node.has_flag(NodeFlag::Visible)
        && !node.has_flag(NodeFlag::Disabled)
        && node.bbox.is_some_and(|b| b.area() > 0.0)
}

/// The interactability predicate: displayed and either an interactive tag,
/// an interactive ARIA role, or carrying a click handler / pointer cursor.
pub fn is_interactable(node: &DomNode) -> bool {
    is_displayed(node)
        && (INTERACTIVE_TAGS.contains(&node.tag.as_str())
            || node.attr("role").is_some_and(|r| INTERACTIVE_ROLES.contains(&r))
            || node.has_flag(NodeFlag::ClickableHandler)
            || node.has_flag(NodeFlag::PointerCursor))
}

fn role_for(node: &DomNode) -> Role {
    let aria = node.attr("role");
    match node.tag.as_str() {
        "a" if aria == Some("button") => Role::LinkButton,
        "a" => Role::Link,
        "button" => Role::Button,
        "input" => match node.attr("type").unwrap_or("text").to_ascii_lowercase().as_str() {
            "button" | "submit" | "reset" | "image" => Role::Button,
            "checkbox" | "radio" | "range" | "color" | "file" => Role::Control,
            _ => Role::Input,
        },
        "textarea" => Role::Input,
        "select" | "option" => Role::SelectData,
        "canvas" | "svg" => Role::CanvasRegion,
        _ => match aria {
            Some("button") => Role::Button,
            Some("link") => Role::Link,
            Some("textbox") | Some("searchbox") => Role::Input,
            _ => Role::Control,
        },
    }
}

fn label_for(snapshot: &DomSnapshot, node: &DomNode) -> String {
    let pick = |v: Option<&str>| {
        v.map(collapse_ws)
            .filter(|s| !s.is_empty())
            .map(|s| truncate_chars(&s, MAX_LABEL_CHARS))
    };
    pick(node.attr("aria-label"))
        .or_else(|| Some(snapshot.visible_text(node.id)).filter(|s| !s.is_empty()))
        .or_else(|| pick(node.attr("title")))
        .or_else(|| pick(node.attr("id")))
        .unwrap_or_else(|| node.tag.clone())
}

/// Extracts referenceable elements in document order with dense indices.
///
/// Interactable nodes get a role from their tag and attributes. Displayed,
/// non-interactable nodes with their own text and no interactable ancestor
/// are listed with role `text` so they can be targeted too.
pub fn extract_interactables(snapshot: &DomSnapshot) -> Vec<UiElement> {
    let sections = snapshot.section_labels();
    let mut out = Vec::new();
    // (node, inside_interactable)
    let mut stack: Vec<(NodeId, bool)> = vec![(0, false)];
    while let Some((id, inside)) = stack.pop() {
        let node = &snapshot.nodes[id as usize];
        let interactable = is_interactable(node);
        let role = if interactable {
            Some(role_for(node))
        } else if !inside && is_displayed(node) && !collapse_ws(&node.text).is_empty() {
            Some(Role::Text)
        } else {
            None
        };
        if let Some(role) = role {
            let index = out.len();
            let label = label_for(snapshot, node);
            let section = sections.get(&id).cloned().unwrap_or_default();
            out.push(UiElement {
                index,
                node_id: id,
                role,
                descriptor: format!("#{index} [{role}] {label}"),
                label,
                section,
            });
        }
        let inside = inside || interactable;
        stack.extend(node.children.iter().rev().map(|&c| (c, inside)));
    }
    out
}

/// `"#<index> [<role>] <label>"`.
pub fn describe_element(element: &UiElement) -> String {
    format!("#{} [{}] {}", element.index, element.role, element.label)
}

/// Renders the element listing used in prompts, emitting a
/// `[Section] <name>` line whenever the section changes.
pub fn element_listing(elements: &[UiElement]) -> String {
    let mut out = String::new();
    let mut current: Option<&str> = None;
    for e in elements {
        if !e.section.is_empty() && current != Some(e.section.as_str()) {
            out.push_str(&format!("[Section] {}\n", e.section));
        }
        current = Some(e.section.as_str());
        let indent = if e.section.is_empty() { "" } else { "  " };
        out.push_str(indent);
        out.push_str(&e.descriptor);
        out.push('\n');
    }
    out
}

/// Structural tree equality. With `ignore_assist_tags`, the assistance tag
/// attribute is disregarded on every node.
pub fn snapshot_equal(a: &DomSnapshot, b: &DomSnapshot, ignore_assist_tags: bool) -> bool {
    if a.nodes.len() != b.nodes.len() {
        return false;
    }
    a.nodes.iter().zip(&b.nodes).all(|(x, y)| {
        if !ignore_assist_tags {
            return x == y;
        }
        fn strip(n: &DomNode) -> Vec<(&String, &String)> {
            n.attrs
                .iter()
                .filter(|(k, _)| k.as_str() != ASSIST_TAG_ATTR)
                .collect()
        }
        x.id == y.id
            && x.tag == y.tag
            && x.text == y.text
            && x.children == y.children
            && x.bbox == y.bbox
            && x.flags == y.flags
            && strip(x) == strip(y)
    })
}
