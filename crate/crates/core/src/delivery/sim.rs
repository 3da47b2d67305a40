//! Applies plans to snapshots and reverts them, mirroring what the page
//! overlay does on a live document.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::plan::{
    parse_style, parse_tag, render_style, tag_value, DeliveryPlan, NodeRef, NodeSpec, OpBody, Placement, TIP_SIZE,
    WIDGET_SIZE,
};
use super::DeliveryError;
use crate::dom_model::{BoundingBox, DomNode, DomSnapshot, NodeFlag, NodeId, ASSIST_TAG_ATTR};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InverseOp {
    /// Remove every node carrying this tag value.
    RemoveCreated { tag: String, count: usize },
    RestoreText { node: NodeId, old: String, new: String },
    RestoreAttribute {
        node: NodeId,
        name: String,
        old: Option<String>,
        new: Option<String>,
    },
    MoveBack {
        node: NodeId,
        parent: NodeId,
        position: usize,
        from_parent: NodeId,
    },
}

/// Inverse operations in the order they must run (last applied, first
/// undone).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReversalRecord {
    pub plan_id: String,
    pub inverse_ops: Vec<InverseOp>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RevertOutcome {
    pub snapshot: DomSnapshot,
    /// True when some tagged state no longer matched what the plan wrote.
    pub tampered: bool,
    pub issues: Vec<String>,
}

struct Tree {
    nodes: Vec<DomNode>,
}

impl Tree {
    fn get(&self, id: NodeId) -> Result<&DomNode, DeliveryError> {
        self.nodes.get(id as usize).ok_or(DeliveryError::StaleTarget(id))
    }

    fn get_mut(&mut self, id: NodeId) -> Result<&mut DomNode, DeliveryError> {
        self.nodes.get_mut(id as usize).ok_or(DeliveryError::StaleTarget(id))
    }

    fn parent_of(&self, id: NodeId) -> Option<(NodeId, usize)> {
        self.nodes
            .iter()
            .find_map(|n| n.children.iter().position(|&c| c == id).map(|p| (n.id, p)))
    }

    fn is_ancestor(&self, ancestor: NodeId, id: NodeId) -> bool {
        let mut cur = self.parent_of(id);
        while let Some((p, _)) = cur {
            if p == ancestor {
                return true;
            }
            cur = self.parent_of(p);
        }
        false
    }

    fn detach(&mut self, id: NodeId) -> Option<(NodeId, usize)> {
        let (p, pos) = self.parent_of(id)?;
        self.nodes[p as usize].children.remove(pos);
        Some((p, pos))
    }

    fn insert(&mut self, parent: NodeId, position: usize, id: NodeId) -> usize {
        let children = &mut self.nodes[parent as usize].children;
        let at = position.min(children.len());
        children.insert(at, id);
        at
    }

    /// Creates the NodeSpec subtree, unattached, and returns the root id.
    fn build(&mut self, spec: &NodeSpec, tag: &str) -> NodeId {
        let id = self.nodes.len() as NodeId;
        let mut node = DomNode::new(id, spec.tag.to_ascii_lowercase());
        node.text = spec.text.clone();
        node.attrs = spec.attributes.clone();
        if !spec.style.is_empty() {
            let decls: Vec<(String, String)> = spec.style.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            node.attrs.insert("style".into(), render_style(&decls));
        }
        node.attrs.insert(ASSIST_TAG_ATTR.into(), tag.to_string());
        node.flags = BTreeSet::from([NodeFlag::Visible]);
        self.nodes.push(node);
        for child in &spec.children {
            let cid = self.build(child, tag);
            self.nodes[id as usize].children.push(cid);
        }
        id
    }

    /// Removes the given nodes and renumbers the rest densely, keeping
    /// their relative order.
    fn remove_and_compact(&mut self, doomed: &BTreeSet<NodeId>) {
        let mut remap: HashMap<NodeId, NodeId> = HashMap::new();
        let mut next = 0;
        for n in &self.nodes {
            if !doomed.contains(&n.id) {
                remap.insert(n.id, next);
                next += 1;
            }
        }
        let old = std::mem::take(&mut self.nodes);
        for mut n in old {
            let Some(&new_id) = remap.get(&n.id) else { continue };
            n.id = new_id;
            n.children = n.children.iter().filter_map(|c| remap.get(c).copied()).collect();
            self.nodes.push(n);
        }
    }
}

fn floating_bbox(anchor: Option<BoundingBox>, root: Option<BoundingBox>, dx: f64, dy: f64, size: (f64, f64)) -> BoundingBox {
    let origin = anchor.or(root).map(|b| (b.x, b.y)).unwrap_or((0.0, 0.0));
    let mut x = origin.0 + dx;
    let mut y = origin.1 + dy;
    if let Some(v) = root {
        x = x.min(v.x + v.width - size.0).max(v.x);
        y = y.min(v.y + v.height - size.1).max(v.y);
    }
    BoundingBox {
        x,
        y,
        width: size.0,
        height: size.1,
    }
}

/// Tags an existing node with the plan's first touching op, recording the
/// previous tag value.
fn tag_existing(tree: &mut Tree, id: NodeId, plan_id: &str, seq: u32, inverses: &mut Vec<InverseOp>) -> Result<(), DeliveryError> {
    let node = tree.get_mut(id)?;
    let current = node.attrs.get(ASSIST_TAG_ATTR).cloned();
    if current.as_deref().and_then(parse_tag).is_some_and(|(p, _)| p == plan_id) {
        return Ok(());
    }
    let value = tag_value(plan_id, seq);
    node.attrs.insert(ASSIST_TAG_ATTR.into(), value.clone());
    inverses.push(InverseOp::RestoreAttribute {
        node: id,
        name: ASSIST_TAG_ATTR.into(),
        old: current,
        new: Some(value),
    });
    Ok(())
}

/// Executes `plan` on a copy of `snapshot`.
pub fn apply_sim(snapshot: &DomSnapshot, plan: &DeliveryPlan) -> Result<(DomSnapshot, ReversalRecord), DeliveryError> {
    if plan.ops.is_empty() {
        return Err(DeliveryError::InvalidOperation("plan has no operations".into()));
    }
    if snapshot.nodes.iter().any(|n| {
        n.attr(ASSIST_TAG_ATTR)
            .and_then(parse_tag)
            .is_some_and(|(p, _)| p == plan.plan_id)
    }) {
        return Err(DeliveryError::InvalidOperation(format!("plan {} is already applied", plan.plan_id)));
    }
    let mut tree = Tree {
        nodes: snapshot.nodes.clone(),
    };
    let mut created: HashMap<u32, NodeId> = HashMap::new();
    let mut inverses: Vec<InverseOp> = Vec::new();
    for (i, op) in plan.ops.iter().enumerate() {
        if op.seq as usize != i {
            return Err(DeliveryError::InvalidOperation(format!("op {i} has seq {}", op.seq)));
        }
        let tag = tag_value(&plan.plan_id, op.seq);
        if let Some(t) = op.target {
            tree.get(t)?;
        }
        match &op.body {
            OpBody::CreateNode(spec) | OpBody::AnchorOverlay(spec) | OpBody::MountWidget(spec) => {
                let floating = matches!(spec.placement, Placement::FloatingAnchor { .. });
                let wants_floating = !matches!(op.body, OpBody::CreateNode(_));
                if floating != wants_floating {
                    return Err(DeliveryError::InvalidOperation(format!(
                        "{} cannot use placement {:?}",
                        op.body.kind(),
                        spec.placement
                    )));
                }
                let (parent, position) = match (spec.placement, op.target) {
                    (Placement::AdjacentBefore, Some(a)) | (Placement::AdjacentAfter, Some(a)) => {
                        let (p, pos) = tree
                            .parent_of(a)
                            .ok_or_else(|| DeliveryError::InvalidOperation(format!("anchor {a} has no parent")))?;
                        let at = if spec.placement == Placement::AdjacentBefore { pos } else { pos + 1 };
                        (p, at)
                    }
                    (Placement::AdjacentBefore, None) | (Placement::AdjacentAfter, None) => {
                        return Err(DeliveryError::InvalidOperation("adjacent placement needs an anchor".into()))
                    }
                    (Placement::AppendChild, t) => {
                        let p = t.unwrap_or(0);
                        (p, tree.get(p)?.children.len())
                    }
                    (Placement::FloatingAnchor { .. }, _) => (0, tree.nodes[0].children.len()),
                };
                if matches!(op.body, OpBody::AnchorOverlay(_)) && op.target.is_none() {
                    return Err(DeliveryError::InvalidOperation("an overlay needs an anchor".into()));
                }
                let id = tree.build(spec, &tag);
                if let Placement::FloatingAnchor { dx, dy } = spec.placement {
                    let size = if matches!(op.body, OpBody::MountWidget(_)) { WIDGET_SIZE } else { TIP_SIZE };
                    let anchor = op.target.and_then(|t| tree.nodes[t as usize].bbox);
                    tree.nodes[id as usize].bbox = Some(floating_bbox(anchor, tree.nodes[0].bbox, dx, dy, size));
                }
                tree.insert(parent, position, id);
                created.insert(op.seq, id);
                inverses.push(InverseOp::RemoveCreated {
                    tag,
                    count: spec.size(),
                });
            }
            OpBody::SetText { new, .. } => {
                let id = op
                    .target
                    .ok_or_else(|| DeliveryError::InvalidOperation("set_text needs a target".into()))?;
                let node = tree.get_mut(id)?;
                let old = std::mem::replace(&mut node.text, new.clone());
                inverses.push(InverseOp::RestoreText { node: id, old, new: new.clone() });
                tag_existing(&mut tree, id, &plan.plan_id, op.seq, &mut inverses)?;
            }
            OpBody::SetStyle(changes) => {
                let id = op
                    .target
                    .ok_or_else(|| DeliveryError::InvalidOperation("set_style needs a target".into()))?;
                let node = tree.get_mut(id)?;
                let old = node.attrs.get("style").cloned();
                let mut decls = parse_style(old.as_deref().unwrap_or(""));
                for (prop, change) in changes {
                    match decls.iter_mut().find(|(p, _)| p == prop) {
                        Some(d) => d.1 = change.new.clone(),
                        None => decls.push((prop.clone(), change.new.clone())),
                    }
                }
                let new = render_style(&decls);
                node.attrs.insert("style".into(), new.clone());
                inverses.push(InverseOp::RestoreAttribute {
                    node: id,
                    name: "style".into(),
                    old,
                    new: Some(new),
                });
                tag_existing(&mut tree, id, &plan.plan_id, op.seq, &mut inverses)?;
            }
            OpBody::SetAttribute { name, new, .. } => {
                let id = op
                    .target
                    .ok_or_else(|| DeliveryError::InvalidOperation("set_attribute needs a target".into()))?;
                if name == ASSIST_TAG_ATTR || name.trim().is_empty() {
                    return Err(DeliveryError::InvalidOperation(format!("attribute {name:?} cannot be set by a plan")));
                }
                let node = tree.get_mut(id)?;
                let old = node.attrs.insert(name.clone(), new.clone());
                inverses.push(InverseOp::RestoreAttribute {
                    node: id,
                    name: name.clone(),
                    old,
                    new: Some(new.clone()),
                });
                tag_existing(&mut tree, id, &plan.plan_id, op.seq, &mut inverses)?;
            }
            OpBody::MoveNode { new_parent, new_position, .. } => {
                let id = op
                    .target
                    .ok_or_else(|| DeliveryError::InvalidOperation("move_node needs a target".into()))?;
                let dest = match *new_parent {
                    NodeRef::Existing(p) => {
                        tree.get(p)?;
                        p
                    }
                    NodeRef::Created { created: seq } => *created.get(&seq).ok_or_else(|| {
                        DeliveryError::InvalidOperation(format!("op {} refers to uncreated node of op {seq}", op.seq))
                    })?,
                };
                if id == 0 || id == dest || tree.is_ancestor(id, dest) {
                    return Err(DeliveryError::InvalidOperation(format!("cannot move node {id} into {dest}")));
                }
                let (old_parent, old_position) = tree
                    .detach(id)
                    .ok_or_else(|| DeliveryError::InvalidOperation(format!("node {id} has no parent")))?;
                tree.insert(dest, *new_position, id);
                inverses.push(InverseOp::MoveBack {
                    node: id,
                    parent: old_parent,
                    position: old_position,
                    from_parent: dest,
                });
                tag_existing(&mut tree, id, &plan.plan_id, op.seq, &mut inverses)?;
            }
        }
    }
    inverses.reverse();
    let out = DomSnapshot {
        url: snapshot.url.clone(),
        title: snapshot.title.clone(),
        captured_at: snapshot.captured_at,
        nodes: tree.nodes,
    };
    Ok((
        out,
        ReversalRecord {
            plan_id: plan.plan_id.clone(),
            inverse_ops: inverses,
        },
    ))
}

/// Undoes a plan. Reverting a plan that is no longer present is a no-op.
/// State that differs from what the plan wrote is restored anyway and
/// reported as tampering.
pub fn revert_sim(snapshot: &DomSnapshot, record: &ReversalRecord) -> RevertOutcome {
    let present = snapshot.nodes.iter().any(|n| {
        n.attr(ASSIST_TAG_ATTR)
            .and_then(parse_tag)
            .is_some_and(|(p, _)| p == record.plan_id)
    });
    if !present {
        return RevertOutcome {
            snapshot: snapshot.clone(),
            tampered: false,
            issues: Vec::new(),
        };
    }
    let mut tree = Tree {
        nodes: snapshot.nodes.clone(),
    };
    let mut issues = Vec::new();
    for inv in &record.inverse_ops {
        match inv {
            InverseOp::RestoreText { node, old, new } => match tree.nodes.get_mut(*node as usize) {
                Some(n) => {
                    if &n.text != new {
                        issues.push(format!("text of node {node} was changed after delivery"));
                    }
                    n.text = old.clone();
                }
                None => issues.push(format!("node {node} is missing")),
            },
            InverseOp::RestoreAttribute { node, name, old, new } => match tree.nodes.get_mut(*node as usize) {
                Some(n) => {
                    if n.attrs.get(name) != new.as_ref() {
                        issues.push(format!("attribute {name} of node {node} was changed after delivery"));
                    }
                    match old {
                        Some(v) => {
                            n.attrs.insert(name.clone(), v.clone());
                        }
                        None => {
                            n.attrs.remove(name);
                        }
                    }
                }
                None => issues.push(format!("node {node} is missing")),
            },
            InverseOp::MoveBack {
                node,
                parent,
                position,
                from_parent,
            } => {
                if *node as usize >= tree.nodes.len() || *parent as usize >= tree.nodes.len() {
                    issues.push(format!("node {node} or its parent {parent} is missing"));
                    continue;
                }
                match tree.detach(*node) {
                    Some((p, _)) if p == *from_parent => {}
                    _ => issues.push(format!("node {node} was moved after delivery")),
                }
                tree.insert(*parent, *position, *node);
            }
            InverseOp::RemoveCreated { tag, count } => {
                let doomed: BTreeSet<NodeId> = tree
                    .nodes
                    .iter()
                    .filter(|n| n.attr(ASSIST_TAG_ATTR) == Some(tag.as_str()))
                    .map(|n| n.id)
                    .collect();
                if doomed.len() != *count {
                    issues.push(format!("expected {count} nodes tagged {tag}, found {}", doomed.len()));
                }
                // Untagged nodes left inside created ones are rescued to the root.
                let orphans: Vec<NodeId> = doomed
                    .iter()
                    .flat_map(|&d| tree.nodes[d as usize].children.clone())
                    .filter(|c| !doomed.contains(c))
                    .collect();
                for o in orphans {
                    issues.push(format!("node {o} was inside removed assistance; moved to the root"));
                    tree.detach(o);
                    let end = tree.nodes[0].children.len();
                    tree.insert(0, end, o);
                }
                tree.remove_and_compact(&doomed);
            }
        }
    }
    RevertOutcome {
        snapshot: DomSnapshot {
            url: snapshot.url.clone(),
            title: snapshot.title.clone(),
            captured_at: snapshot.captured_at,
            nodes: tree.nodes,
        },
        tampered: !issues.is_empty(),
        issues,
    }
}
