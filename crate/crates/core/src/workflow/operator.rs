//! Operator registry: names, arities, domain rules and unit behavior.

use serde::{Deserialize, Serialize};

use super::WorkflowError;

/// Static domain requirement an operator places on its (first) operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainRule {
    None,
    InputNonneg,
    InputPositive,
}

/// How an operator combines the physical units of its operands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitBehavior {
    /// Operands must share one signature.
    Additive,
    /// Exponents are added, subtracted, negated or halved.
    Multiplicative,
    /// Shifts the exponent of `dimension` by `shift` (derivative: -1, integral: +1).
    Transform { dimension: String, shift: i32 },
    /// Operands must be dimensionless; the result is dimensionless.
    Unitless,
}

/// Numeric semantics of an operator in the interpreter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpCode {
    Add,
    Sub,
    Mul,
    Div,
    Sqrt,
    Log,
    Pow,
    Neg,
    /// Rate over a unit interval of the transform dimension. Numerically the identity.
    Derivative,
    /// Accumulation over a unit interval of the transform dimension. Numerically the identity.
    Integral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorKind {
    pub name: String,
    pub arity: usize,
    pub domain_rule: DomainRule,
    pub unit_behavior: UnitBehavior,
    pub code: OpCode,
}

impl OperatorKind {
    fn new(name: &str, arity: usize, domain_rule: DomainRule, unit_behavior: UnitBehavior, code: OpCode) -> Self {
        Self {
            name: name.to_string(),
            arity,
            domain_rule,
            unit_behavior,
            code,
        }
    }

    /// `true` when swapping the two operands never changes the result.
    pub fn is_commutative(&self) -> bool {
        matches!(self.code, OpCode::Add | OpCode::Mul)
    }
}

/// Names reserved for root nodes. They are never registry operators.
pub const INPUT_OP: &str = "input";
pub const CONST_OP: &str = "const";

/// Ordered set of operators. The order fixes the coordinates of operator
/// histogram vectors, so it must be identical across a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorRegistry {
    ops: Vec<OperatorKind>,
}

impl OperatorRegistry {
    pub fn new(ops: Vec<OperatorKind>) -> Result<Self, WorkflowError> {
        for (i, op) in ops.iter().enumerate() {
            if op.name == INPUT_OP || op.name == CONST_OP {
                return Err(WorkflowError::Registry(format!("`{}` is reserved for roots", op.name)));
            }
            if ops[..i].iter().any(|o| o.name == op.name) {
                return Err(WorkflowError::Registry(format!("duplicate operator `{}`", op.name)));
            }
            if op.unit_behavior == UnitBehavior::Additive && op.arity < 2 {
                return Err(WorkflowError::Registry(format!(
                    "additive operator `{}` needs arity >= 2",
                    op.name
                )));
            }
        }
        Ok(Self { ops })
    }

    /// The eight-operator scalar registry: add, sub, mul, div, sqrt, log, pow, neg.
    pub fn baseline() -> Self {
        Self::new(catalog().into_iter().take(8).collect()).expect("baseline registry is well formed")
    }

    /// Baseline plus `d_dt` / `integral_dt` transforms over the `time` dimension.
    pub fn with_calculus() -> Self {
        Self::new(catalog()).expect("calculus registry is well formed")
    }

    /// Builds a registry from catalog operator names, in the given order.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, WorkflowError> {
        let all = catalog();
        let ops = names
            .iter()
            .map(|n| {
                all.iter()
                    .find(|o| o.name == n.as_ref())
                    .cloned()
                    .ok_or_else(|| WorkflowError::Registry(format!("unknown operator `{}`", n.as_ref())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(ops)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&OperatorKind> {
        self.ops.iter().find(|o| o.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.ops.iter().position(|o| o.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &OperatorKind> {
        self.ops.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.ops.iter().map(|o| o.name.clone()).collect()
    }
}

fn catalog() -> Vec<OperatorKind> {
    use DomainRule as D;
    use UnitBehavior as U;
    vec![
        OperatorKind::new("add", 2, D::None, U::Additive, OpCode::Add),
        OperatorKind::new("sub", 2, D::None, U::Additive, OpCode::Sub),
        OperatorKind::new("mul", 2, D::None, U::Multiplicative, OpCode::Mul),
        OperatorKind::new("div", 2, D::None, U::Multiplicative, OpCode::Div),
        OperatorKind::new("sqrt", 1, D::InputNonneg, U::Multiplicative, OpCode::Sqrt),
        OperatorKind::new("log", 1, D::InputPositive, U::Unitless, OpCode::Log),
        OperatorKind::new("pow", 2, D::None, U::Unitless, OpCode::Pow),
        OperatorKind::new("neg", 1, D::None, U::Multiplicative, OpCode::Neg),
        OperatorKind::new(
            "d_dt",
            1,
            D::None,
            U::Transform {
                dimension: "time".into(),
                shift: -1,
            },
            OpCode::Derivative,
        ),
        OperatorKind::new(
            "integral_dt",
            1,
            D::None,
            U::Transform {
                dimension: "time".into(),
                shift: 1,
            },
            OpCode::Integral,
        ),
    ]
}
