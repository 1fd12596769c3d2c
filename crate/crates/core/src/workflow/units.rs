//! Physical unit signatures and tensor shape tags.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize};

use super::operator::{OpCode, OperatorKind, UnitBehavior};

/// Integer exponents over base dimensions. Zero exponents are never stored,
/// so derived equality is equality of the nonzero exponents and the empty
/// map is dimensionless.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct UnitSignature {
    exponents: BTreeMap<String, i32>,
}

impl<'de> Deserialize<'de> for UnitSignature {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, i32>::deserialize(deserializer)?;
        Ok(Self::from_exponents(raw))
    }
}

impl UnitSignature {
    pub fn dimensionless() -> Self {
        Self::default()
    }

    pub fn base(dimension: &str) -> Self {
        Self::from_exponents([(dimension.to_string(), 1)])
    }

    pub fn from_exponents<I: IntoIterator<Item = (String, i32)>>(pairs: I) -> Self {
        let mut exponents = BTreeMap::new();
        for (dim, e) in pairs {
            *exponents.entry(dim).or_insert(0) += e;
        }
        exponents.retain(|_, e| *e != 0);
        Self { exponents }
    }

    pub fn is_dimensionless(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponent(&self, dimension: &str) -> i32 {
        self.exponents.get(dimension).copied().unwrap_or(0)
    }

    pub fn exponents(&self) -> &BTreeMap<String, i32> {
        &self.exponents
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::from_exponents(
            self.exponents
                .iter()
                .chain(other.exponents.iter())
                .map(|(d, e)| (d.clone(), *e)),
        )
    }

    pub fn div(&self, other: &Self) -> Self {
        self.mul(&other.powi(-1))
    }

    pub fn powi(&self, k: i32) -> Self {
        Self::from_exponents(self.exponents.iter().map(|(d, e)| (d.clone(), e * k)))
    }

    /// Square root; `None` when some exponent is odd.
    pub fn sqrt(&self) -> Option<Self> {
        if self.exponents.values().all(|e| e % 2 == 0) {
            Some(Self::from_exponents(self.exponents.iter().map(|(d, e)| (d.clone(), e / 2))))
        } else {
            None
        }
    }

    pub fn shift(&self, dimension: &str, by: i32) -> Self {
        self.mul(&Self::from_exponents([(dimension.to_string(), by)]))
    }
}

/// Result of a unit check on one operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitCheck {
    pub ok: bool,
    /// Signature of the result, when it can be determined.
    pub output: Option<UnitSignature>,
}

/// Checks one operation whose operands all carry unit signatures.
pub fn check_units(op: &OperatorKind, operands: &[&UnitSignature]) -> UnitCheck {
    match &op.unit_behavior {
        UnitBehavior::Additive => {
            let first = operands[0];
            let ok = operands.iter().all(|u| *u == first);
            UnitCheck {
                ok,
                output: ok.then(|| first.clone()),
            }
        }
        UnitBehavior::Multiplicative => {
            let output = match op.code {
                OpCode::Mul => Some(operands.iter().fold(UnitSignature::dimensionless(), |acc, u| acc.mul(u))),
                OpCode::Div => Some(operands[0].div(operands[1])),
                OpCode::Sqrt => operands[0].sqrt(),
                _ => Some(operands[0].clone()),
            };
            UnitCheck { ok: true, output }
        }
        UnitBehavior::Transform { dimension, shift } => UnitCheck {
            ok: true,
            output: Some(operands[0].shift(dimension, *shift)),
        },
        UnitBehavior::Unitless => {
            let ok = operands.iter().all(|u| u.is_dimensionless());
            UnitCheck {
                ok,
                output: ok.then(UnitSignature::dimensionless),
            }
        }
    }
}

/// Linear-algebra shape tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

/// Shape compatibility of one operation; returns the result shape when compatible.
pub fn check_shapes(op: &OperatorKind, operands: &[Shape]) -> Option<Shape> {
    use Shape::*;
    match op.code {
        OpCode::Add | OpCode::Sub => operands.iter().all(|s| *s == operands[0]).then_some(operands[0]),
        OpCode::Mul => match (operands[0], operands[1]) {
            (Scalar, s) | (s, Scalar) => Some(s),
            (Vector(a), Vector(b)) => (a == b).then_some(Vector(a)),
            (Matrix(m, n), Matrix(p, q)) => (n == p).then_some(Matrix(m, q)),
            (Matrix(m, n), Vector(p)) => (n == p).then_some(Vector(m)),
            (Vector(p), Matrix(m, n)) => (p == m).then_some(Vector(n)),
        },
        OpCode::Div => match (operands[0], operands[1]) {
            (s, Scalar) => Some(s),
            (a, b) => (a == b).then_some(a),
        },
        OpCode::Pow => (operands[1] == Scalar).then_some(operands[0]),
        OpCode::Sqrt | OpCode::Log | OpCode::Neg | OpCode::Derivative | OpCode::Integral => Some(operands[0]),
    }
}
