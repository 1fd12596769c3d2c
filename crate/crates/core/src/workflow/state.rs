//! The lightweight state view that constraint scoring consumes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::analysis::analyze;
use super::interpret::ExecutionTrace;
use super::operator::OperatorRegistry;
use super::program::{NodeId, ProgramIndex, WorkflowProgram};
use super::WorkflowError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowState {
    /// Longest root-to-output path, counted in edges.
    pub depth: usize,
    pub operator_histogram: BTreeMap<String, usize>,
    /// Operator nodes whose operands all carry unit signatures.
    pub unit_tagged_ops: BTreeSet<NodeId>,
    /// Largest absolute intermediate value; present only when derived from a trace.
    pub magnitude_summary: Option<f64>,
}

impl WorkflowState {
    /// Histogram as a dense vector in registry order. Operators outside the
    /// registry are ignored.
    pub fn histogram_vector(&self, registry: &OperatorRegistry) -> Vec<f64> {
        registry
            .iter()
            .map(|op| self.operator_histogram.get(&op.name).copied().unwrap_or(0) as f64)
            .collect()
    }

    pub fn op_count(&self) -> usize {
        self.operator_histogram.values().sum()
    }
}

pub fn derive_state(
    program: &WorkflowProgram,
    registry: &OperatorRegistry,
    trace: Option<&ExecutionTrace>,
) -> Result<WorkflowState, WorkflowError> {
    let index = ProgramIndex::new(program, registry)?;
    let depth = index.depths()[index.output()];
    let mut operator_histogram = BTreeMap::new();
    let mut unit_tagged_ops = BTreeSet::new();
    let facts = analyze(&index, registry);
    for (i, node) in program.nodes.iter().enumerate() {
        if index.is_root(i) {
            continue;
        }
        *operator_histogram.entry(node.op.clone()).or_insert(0) += 1;
        if facts[i].units_ok.is_some() {
            unit_tagged_ops.insert(node.id);
        }
    }
    let magnitude_summary = trace.map(|t| t.max_abs());
    Ok(WorkflowState {
        depth,
        operator_histogram,
        unit_tagged_ops,
        magnitude_summary,
    })
}
