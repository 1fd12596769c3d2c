//! Workflow programs as typed operator graphs.
//!
//! A [`WorkflowProgram`] is a DAG of registry operators over `input` and
//! `const` roots with a single output node. Nodes may carry a physical
//! [`UnitSignature`] and a [`Shape`] tag; untagged nodes infer both from their
//! operands when possible. [`derive_state`] produces the compact
//! [`WorkflowState`] used for constraint scoring and [`interpret`] evaluates a
//! program on concrete inputs.

mod analysis;
mod interpret;
mod operator;
mod program;
mod state;
mod units;

pub use analysis::{analyze, NodeFacts, SignSet};
pub use interpret::{interpret, ExecutionTrace, RuntimeViolation, RuntimeViolationKind};
pub use operator::{DomainRule, OpCode, OperatorKind, OperatorRegistry, UnitBehavior, CONST_OP, INPUT_OP};
pub use program::{
    validate_program, Edge, Node, NodeId, ProgramBuilder, ProgramIndex, ValidationReport, Violation, WorkflowProgram,
};
pub use state::{derive_state, WorkflowState};
pub use units::{check_shapes, check_units, Shape, UnitCheck, UnitSignature};

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error("invalid program: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("missing input for root {0}")]
    MissingInput(NodeId),
    #[error("registry: {0}")]
    Registry(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error("internal: {0}")]
    Internal(String),
}
