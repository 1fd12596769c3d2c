//! Scalar interpreter for workflow programs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::operator::{OpCode, OperatorRegistry, CONST_OP};
use super::program::{NodeId, ProgramIndex, WorkflowProgram};
use super::WorkflowError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeViolationKind {
    SqrtOfNegative,
    LogOfNonPositive,
    DivisionByZero,
    NonFinite,
}

impl fmt::Display for RuntimeViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::SqrtOfNegative => "sqrt of negative",
            Self::LogOfNonPositive => "log of non-positive",
            Self::DivisionByZero => "division by zero",
            Self::NonFinite => "non-finite result",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeViolation {
    pub node: NodeId,
    pub kind: RuntimeViolationKind,
}

/// Intermediate values of one execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    /// Node that produced each entry of `values`.
    pub nodes: Vec<NodeId>,
    /// Intermediate values X_w, in evaluation order.
    pub values: Vec<f64>,
    /// Input and constant values V_in, in root order.
    pub input_constants: Vec<f64>,
    pub success: bool,
    pub output: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<RuntimeViolation>,
}

impl ExecutionTrace {
    /// Largest absolute intermediate value, 0 for an empty trace.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Evaluates `program` in topological order. A runtime domain violation stops
/// evaluation and yields `success = false` with the values computed so far.
/// Programs whose output is a root record the output as their only value.
pub fn interpret(
    program: &WorkflowProgram,
    registry: &OperatorRegistry,
    inputs: &BTreeMap<NodeId, f64>,
) -> Result<ExecutionTrace, WorkflowError> {
    let index = ProgramIndex::new(program, registry)?;
    let mut input_constants = Vec::with_capacity(program.roots.len());
    for r in &program.roots {
        let node = program.node(*r).expect("validated root");
        let v = if node.op == CONST_OP {
            node.value.expect("validated const")
        } else {
            *inputs.get(r).ok_or(WorkflowError::MissingInput(*r))?
        };
        input_constants.push(v);
    }

    let mut slots: Vec<Option<f64>> = vec![None; index.len()];
    for (r, v) in program.roots.iter().zip(&input_constants) {
        slots[index.position(*r).unwrap()] = Some(*v);
    }
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for &v in index.topo_order() {
        if index.is_root(v) {
            continue;
        }
        let node = index.node(v);
        let args: Vec<f64> = index
            .inputs(v)
            .iter()
            .map(|&u| slots[u].ok_or(WorkflowError::Internal(format!("node {} read before written", index.node(u).id))))
            .collect::<Result<_, _>>()?;
        let op = registry.get(&node.op).expect("validated operator");
        match apply(op.code, &args) {
            Ok(x) => {
                slots[v] = Some(x);
                nodes.push(node.id);
                values.push(x);
            }
            Err(kind) => {
                return Ok(ExecutionTrace {
                    nodes,
                    values,
                    input_constants,
                    success: false,
                    output: None,
                    violation: Some(RuntimeViolation { node: node.id, kind }),
                });
            }
        }
    }
    let out = index.output();
    let output = slots[out].expect("output evaluated");
    if index.is_root(out) {
        nodes.push(program.output);
        values.push(output);
    }
    Ok(ExecutionTrace {
        nodes,
        values,
        input_constants,
        success: true,
        output: Some(output),
        violation: None,
    })
}

fn apply(code: OpCode, a: &[f64]) -> Result<f64, RuntimeViolationKind> {
    use RuntimeViolationKind as K;
    let x = match code {
        OpCode::Add => a[0] + a[1],
        OpCode::Sub => a[0] - a[1],
        OpCode::Mul => a[0] * a[1],
        OpCode::Div => {
            if a[1] == 0.0 {
                return Err(K::DivisionByZero);
            }
            a[0] / a[1]
        }
        OpCode::Sqrt => {
            if a[0] < 0.0 {
                return Err(K::SqrtOfNegative);
            }
            a[0].sqrt()
        }
        OpCode::Log => {
            if a[0] <= 0.0 {
                return Err(K::LogOfNonPositive);
            }
            a[0].ln()
        }
        OpCode::Pow => a[0].powf(a[1]),
        OpCode::Neg => -a[0],
        OpCode::Derivative | OpCode::Integral => a[0],
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(K::NonFinite)
    }
}
