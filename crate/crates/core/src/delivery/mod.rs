//! Turning grounded cases into declarative DOM edits, and a snapshot
//! simulator that applies and reverts them.

pub mod config;
pub mod plan;
pub mod sim;

pub use config::{parse_config, SubtypeConfig, Violation, WidgetAction, WidgetControl, ALLOWED_STYLE_PROPERTIES};
pub use plan::{
    compile_plan, parse_tag, tag_value, validate_grounded, DeliveryPlan, DomOperation, NodeRef, NodeSpec, OpBody,
    Placement,
};
pub use sim::{apply_sim, revert_sim, InverseOp, ReversalRecord, RevertOutcome};

use crate::dom_model::NodeId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeliveryError {
    #[error("invalid configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidConfig(Vec<Violation>),
    #[error("target {0:?} was not grounded")]
    UngroundedTarget(String),
    #[error("cannot compile plan: {0}")]
    Compile(String),
    #[error("node {0} is not present in the snapshot")]
    StaleTarget(NodeId),
    #[error("invalid operation: {0}")]
    InvalidOperation(String),
}
