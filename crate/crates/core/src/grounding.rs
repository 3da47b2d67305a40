//! Resolves semantic targets to concrete elements by embedding similarity.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dom_model::{ElementIndex, NodeId, UiElement};
use crate::handbook::AssistanceCase;
use crate::providers::{ProviderError, Providers, Similarity, Vector};

pub const DEFAULT_SIGMA_MIN: Similarity = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundingConfig {
    pub sigma_min: Similarity,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self { sigma_min: DEFAULT_SIGMA_MIN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedTarget {
    pub ui_description: String,
    pub element_index: ElementIndex,
    pub node_id: NodeId,
    pub similarity: Similarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnresolvedTarget {
    pub ui_description: String,
    /// Best score seen, absent when there was nothing to compare against.
    pub best_similarity: Option<Similarity>,
}

impl fmt::Display for UnresolvedTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.best_similarity {
            Some(s) => write!(f, "{:?} (best {s:.3})", self.ui_description),
            None => write!(f, "{:?}", self.ui_description),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GroundingError {
    #[error("no elements to ground against")]
    EmptyElements,
    #[error("unresolved targets: {}", .0.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", "))]
    UnresolvedTargets(Vec<UnresolvedTarget>),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// One embedding per element, computed once per snapshot.
#[derive(Debug, Clone, Default)]
pub struct ElementEmbeddings {
    elements: Vec<UiElement>,
    vectors: Vec<Vector>,
}

impl ElementEmbeddings {
    pub fn elements(&self) -> &[UiElement] {
        &self.elements
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Best element for an embedded target: maximum cosine, lowest index
    /// on ties.
    pub fn best_match(&self, target: &Vector) -> Option<(usize, Similarity)> {
        let mut best: Option<(usize, Similarity)> = None;
        for (i, v) in self.vectors.iter().enumerate() {
            let s = target.cosine(v);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best
    }
}

pub fn cache_element_embeddings(
    elements: &[UiElement],
    providers: &Providers,
) -> Result<ElementEmbeddings, ProviderError> {
    let vectors = elements
        .iter()
        .map(|e| providers.embed(&e.grounding_text()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ElementEmbeddings {
        elements: elements.to_vec(),
        vectors,
    })
}

/// Grounds every target of `case`. Targets that fall below the floor are
/// all reported together.
pub fn ground_case(
    case: &AssistanceCase,
    table: &ElementEmbeddings,
    cfg: &GroundingConfig,
    providers: &Providers,
) -> Result<Vec<GroundedTarget>, GroundingError> {
    if case.targets.is_empty() {
        return Ok(Vec::new());
    }
    if table.is_empty() {
        return Err(GroundingError::EmptyElements);
    }
    let mut grounded = Vec::with_capacity(case.targets.len());
    let mut unresolved = Vec::new();
    for target in &case.targets {
        let v = providers.embed(&target.ui_description)?;
        match table.best_match(&v) {
            Some((i, s)) if s >= cfg.sigma_min => {
                let e = &table.elements[i];
                grounded.push(GroundedTarget {
                    ui_description: target.ui_description.clone(),
                    element_index: e.index,
                    node_id: e.node_id,
                    similarity: s,
                });
            }
            best => unresolved.push(UnresolvedTarget {
                ui_description: target.ui_description.clone(),
                best_similarity: best.map(|(_, s)| s),
            }),
        }
    }
    if !unresolved.is_empty() {
        return Err(GroundingError::UnresolvedTargets(unresolved));
    }
    Ok(grounded)
}
