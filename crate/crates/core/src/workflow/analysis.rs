//! Static per-node facts: effective unit and shape tags, and a sign
//! abstraction used to decide whether domain rules are satisfiable.

use super::operator::{DomainRule, OpCode, OperatorRegistry, CONST_OP};
use super::program::ProgramIndex;
use super::units::{check_shapes, check_units, Shape, UnitSignature};

/// Set of signs a value may take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignSet(u8);

impl SignSet {
    pub const NEG: SignSet = SignSet(1);
    pub const ZERO: SignSet = SignSet(2);
    pub const POS: SignSet = SignSet(4);
    pub const ANY: SignSet = SignSet(7);

    pub fn of(value: f64) -> Self {
        if value > 0.0 {
            Self::POS
        } else if value < 0.0 {
            Self::NEG
        } else if value == 0.0 {
            Self::ZERO
        } else {
            Self::ANY
        }
    }

    pub fn contains(self, other: SignSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn intersects(self, other: SignSet) -> bool {
        self.0 & other.0 != 0
    }

    fn union(self, other: SignSet) -> Self {
        SignSet(self.0 | other.0)
    }

    fn singletons(self) -> impl Iterator<Item = SignSet> {
        [Self::NEG, Self::ZERO, Self::POS].into_iter().filter(move |s| self.contains(*s))
    }

    fn flip(self) -> Self {
        let mut out = SignSet(self.0 & Self::ZERO.0);
        if self.contains(Self::NEG) {
            out = out.union(Self::POS);
        }
        if self.contains(Self::POS) {
            out = out.union(Self::NEG);
        }
        out
    }

    fn pairwise(a: SignSet, b: SignSet, f: impl Fn(SignSet, SignSet) -> SignSet) -> Self {
        let mut out = SignSet(0);
        for x in a.singletons() {
            for y in b.singletons() {
                out = out.union(f(x, y));
            }
        }
        if out.0 == 0 {
            Self::ANY
        } else {
            out
        }
    }

    fn add(a: SignSet, b: SignSet) -> Self {
        Self::pairwise(a, b, |x, y| {
            if x == Self::ZERO {
                y
            } else if y == Self::ZERO || x == y {
                x
            } else {
                Self::ANY
            }
        })
    }

    fn mul(a: SignSet, b: SignSet) -> Self {
        Self::pairwise(a, b, |x, y| {
            if x == Self::ZERO || y == Self::ZERO {
                Self::ZERO
            } else if x == y {
                Self::POS
            } else {
                Self::NEG
            }
        })
    }

    fn div(a: SignSet, b: SignSet) -> Self {
        let divisor = SignSet(b.0 & !Self::ZERO.0);
        if divisor.0 == 0 {
            return Self::ANY;
        }
        Self::mul(a, divisor)
    }

    /// Whether some value in this set satisfies `rule`.
    pub fn satisfiable(self, rule: DomainRule) -> bool {
        match rule {
            DomainRule::None => true,
            DomainRule::InputNonneg => self.intersects(Self::ZERO.union(Self::POS)),
            DomainRule::InputPositive => self.intersects(Self::POS),
        }
    }
}

/// Static facts about one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFacts {
    /// Explicit tag, else the signature inferred from the operands.
    pub unit: Option<UnitSignature>,
    /// `Some(ok)` when every operand has a unit signature (the node is in O_w^U).
    pub units_ok: Option<bool>,
    pub shape: Option<Shape>,
    /// `Some(ok)` when every operand has a shape.
    pub shape_ok: Option<bool>,
    pub sign: SignSet,
    /// Domain rule satisfiable given the operand signs.
    pub type_ok: bool,
}

/// Computes [`NodeFacts`] for every node, by position.
pub fn analyze(index: &ProgramIndex<'_>, registry: &OperatorRegistry) -> Vec<NodeFacts> {
    let mut facts: Vec<Option<NodeFacts>> = vec![None; index.len()];
    for &v in index.topo_order() {
        let node = index.node(v);
        let f = if index.is_root(v) {
            let sign = match (node.op.as_str(), node.value) {
                (CONST_OP, Some(x)) => SignSet::of(x),
                _ => SignSet::ANY,
            };
            let unit = node.unit.clone().or_else(|| (node.op == CONST_OP).then(UnitSignature::dimensionless));
            NodeFacts {
                unit,
                units_ok: None,
                shape: node.shape.or_else(|| (node.op == CONST_OP).then_some(Shape::Scalar)),
                shape_ok: None,
                sign,
                type_ok: true,
            }
        } else {
            let op = registry.get(&node.op).expect("validated program");
            let operands: Vec<&NodeFacts> = index
                .inputs(v)
                .iter()
                .map(|&u| facts[u].as_ref().expect("topological order visits producers first"))
                .collect();

            let units: Option<Vec<&UnitSignature>> = operands.iter().map(|f| f.unit.as_ref()).collect();
            let (units_ok, inferred_unit) = match units {
                Some(us) => {
                    let check = check_units(op, &us);
                    (Some(check.ok), check.output)
                }
                None => (None, None),
            };
            let shapes: Option<Vec<Shape>> = operands.iter().map(|f| f.shape).collect();
            let (shape_ok, inferred_shape) = match shapes {
                Some(ss) => {
                    let out = check_shapes(op, &ss);
                    (Some(out.is_some()), out)
                }
                None => (None, None),
            };
            let signs: Vec<SignSet> = operands.iter().map(|f| f.sign).collect();
            let type_ok = signs.first().is_none_or(|s| s.satisfiable(op.domain_rule));
            let sign = match op.code {
                OpCode::Add => SignSet::add(signs[0], signs[1]),
                OpCode::Sub => SignSet::add(signs[0], signs[1].flip()),
                OpCode::Mul => SignSet::mul(signs[0], signs[1]),
                OpCode::Div => SignSet::div(signs[0], signs[1]),
                OpCode::Neg => signs[0].flip(),
                OpCode::Sqrt => {
                    let s = SignSet(signs[0].0 & (SignSet::ZERO.0 | SignSet::POS.0));
                    if s.0 == 0 {
                        SignSet::ANY
                    } else {
                        s
                    }
                }
                OpCode::Pow if signs[0] == SignSet::POS => SignSet::POS,
                OpCode::Log | OpCode::Pow => SignSet::ANY,
                OpCode::Derivative | OpCode::Integral => signs[0],
            };
            NodeFacts {
                unit: node.unit.clone().or(inferred_unit),
                units_ok,
                shape: node.shape.or(inferred_shape),
                shape_ok,
                sign,
                type_ok,
            }
        };
        facts[v] = Some(f);
    }
    facts.into_iter().map(|f| f.expect("every node visited")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_arithmetic() {
        assert_eq!(SignSet::add(SignSet::POS, SignSet::POS), SignSet::POS);
        assert_eq!(SignSet::add(SignSet::POS, SignSet::NEG), SignSet::ANY);
        assert_eq!(SignSet::mul(SignSet::NEG, SignSet::NEG), SignSet::POS);
        assert_eq!(SignSet::NEG.flip(), SignSet::POS);
        assert_eq!(SignSet::div(SignSet::POS, SignSet::ZERO), SignSet::ANY);
    }

    #[test]
    fn satisfiability() {
        assert!(!SignSet::NEG.satisfiable(DomainRule::InputNonneg));
        assert!(SignSet::ZERO.satisfiable(DomainRule::InputNonneg));
        assert!(!SignSet::ZERO.satisfiable(DomainRule::InputPositive));
        assert!(SignSet::ANY.satisfiable(DomainRule::InputPositive));
    }
}
