//! Deterministic stand-ins for the proposer and evaluator roles.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::workflow::{
    interpret, validate_program, Edge, Node, NodeId, OperatorRegistry, WorkflowError, WorkflowProgram, INPUT_OP,
};

use super::{Evaluation, Evaluator, HarnessError, Problem, ProblemSet, Proposal, Proposer, Usage};

/// FNV-1a over the program's compact JSON. Stable across builds, unlike the
/// std hasher.
pub fn program_hash(program: &WorkflowProgram) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in program.key().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Number of `neg` nodes stacked by the depth-bloat distractor. Odd, so the
/// bloated program negates its answer.
const BLOAT: usize = 25;

/// Enumerative edit proposer. Candidate edits, in order: insert an operator
/// on an edge (including a virtual edge out of the output), replace an
/// operator with another of equal arity, delete a unary node, rewire one
/// input slot. Results are canonicalized, validated, deduplicated and capped
/// at `max_ops` operator nodes; `propose` then draws a seeded sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProposer {
    pub registry: OperatorRegistry,
    pub max_ops: usize,
    /// Also emit edits that violate constraints: a deep chain of negations
    /// on top of every regular edit, plus log and sqrt of negative
    /// constants and a huge power applied to the current output.
    #[serde(default)]
    pub distractors: bool,
}

impl SyntheticProposer {
    pub fn new(registry: OperatorRegistry, max_ops: usize) -> Self {
        Self {
            registry,
            max_ops,
            distractors: false,
        }
    }

    /// Every distinct valid single-edit neighbour of `program`, in
    /// enumeration order, without distractors.
    pub fn neighbors(&self, program: &WorkflowProgram) -> Vec<WorkflowProgram> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let own = program.canonicalize(&self.registry).ok().map(|p| p.key());
        if let Some(k) = &own {
            seen.insert(k.clone());
        }
        for raw in self.raw_edits(program) {
            self.accept(raw, self.max_ops, &mut seen, &mut out);
        }
        out
    }

    fn accept(&self, raw: WorkflowProgram, cap: usize, seen: &mut BTreeSet<String>, out: &mut Vec<WorkflowProgram>) {
        let Ok(c) = raw.canonicalize(&self.registry) else {
            return;
        };
        if c.op_count() > cap || !validate_program(&c, &self.registry).is_ok() {
            return;
        }
        if seen.insert(c.key()) {
            out.push(c);
        }
    }

    fn raw_edits(&self, p: &WorkflowProgram) -> Vec<WorkflowProgram> {
        let mut out = Vec::new();
        let fresh = p.next_id();
        let ops: Vec<&Node> = p.nodes.iter().filter(|n| !p.roots.contains(&n.id)).collect();

        // insertion on each edge, then on the virtual output edge
        let mut sites: Vec<Option<usize>> = (0..p.edges.len()).map(Some).collect();
        sites.push(None);
        for site in sites {
            let u = match site {
                Some(e) => p.edges[e].from,
                None => p.output,
            };
            let mut operands: Vec<NodeId> = p.roots.clone();
            if !operands.contains(&u) {
                operands.push(u);
            }
            for kind in self.registry.iter() {
                let arg_lists: Vec<Vec<NodeId>> = match kind.arity {
                    1 => vec![vec![u]],
                    2 => {
                        let mut v = Vec::new();
                        for &a in &operands {
                            v.push(vec![u, a]);
                            if !kind.is_commutative() && a != u {
                                v.push(vec![a, u]);
                            }
                        }
                        v
                    }
                    _ => vec![],
                };
                for args in arg_lists {
                    let mut q = p.clone();
                    q.nodes.push(Node::op(fresh, &kind.name));
                    for (slot, a) in args.iter().enumerate() {
                        q.edges.push(Edge {
                            from: *a,
                            to: NodeId(fresh),
                            slot,
                        });
                    }
                    match site {
                        Some(e) => q.edges[e].from = NodeId(fresh),
                        None => q.output = NodeId(fresh),
                    }
                    out.push(q);
                }
            }
        }

        for n in &ops {
            let Some(cur) = self.registry.get(&n.op) else { continue };
            for kind in self.registry.iter() {
                if kind.name != cur.name && kind.arity == cur.arity {
                    let mut q = p.clone();
                    q.nodes.iter_mut().find(|m| m.id == n.id).unwrap().op = kind.name.clone();
                    out.push(q);
                }
            }
        }

        for n in &ops {
            if self.registry.get(&n.op).map(|k| k.arity) != Some(1) {
                continue;
            }
            let Some(src) = p.edges.iter().find(|e| e.to == n.id).map(|e| e.from) else {
                continue;
            };
            let mut q = p.clone();
            q.edges.retain(|e| e.to != n.id);
            for e in q.edges.iter_mut().filter(|e| e.from == n.id) {
                e.from = src;
            }
            if q.output == n.id {
                q.output = src;
            }
            q.nodes.retain(|m| m.id != n.id);
            out.push(q);
        }

        for (ei, e) in p.edges.iter().enumerate() {
            for w in &p.nodes {
                if w.id != e.from && w.id != e.to {
                    let mut q = p.clone();
                    q.edges[ei].from = w.id;
                    out.push(q);
                }
            }
        }
        out
    }

    fn distractor_edits(&self, p: &WorkflowProgram) -> Vec<WorkflowProgram> {
        let mut out = Vec::new();
        let has = |name: &str| self.registry.get(name).is_some();
        let o = p.output;
        let base = p.next_id();
        let wrap = |unary: &str, c: f64| {
            let mut q = p.clone();
            q.nodes.push(Node::constant(base, c));
            q.roots.push(NodeId(base));
            q.nodes.push(Node::op(base + 1, unary));
            q.edges.push(Edge::new(base, base + 1, 0));
            q.nodes.push(Node::op(base + 2, "add"));
            q.edges.push(Edge {
                from: o,
                to: NodeId(base + 2),
                slot: 0,
            });
            q.edges.push(Edge::new(base + 1, base + 2, 1));
            q.output = NodeId(base + 2);
            q
        };
        if has("add") && has("log") {
            out.push(wrap("log", -1.0));
        }
        if has("add") && has("sqrt") {
            out.push(wrap("sqrt", -4.0));
        }
        if let Some(q) = self.bloat(p) {
            out.push(q);
        }
        if has("pow") {
            let mut q = p.clone();
            q.nodes.push(Node::constant(base, 40.0));
            q.roots.push(NodeId(base));
            q.nodes.push(Node::op(base + 1, "pow"));
            q.edges.push(Edge {
                from: o,
                to: NodeId(base + 1),
                slot: 0,
            });
            q.edges.push(Edge::new(base, base + 1, 1));
            q.output = NodeId(base + 1);
            out.push(q);
        }
        out
    }

    fn bloat(&self, p: &WorkflowProgram) -> Option<WorkflowProgram> {
        self.registry.get("neg")?;
        let base = p.next_id();
        let mut q = p.clone();
        let mut prev = p.output;
        for i in 0..BLOAT as u32 {
            q.nodes.push(Node::op(base + i, "neg"));
            q.edges.push(Edge {
                from: prev,
                to: NodeId(base + i),
                slot: 0,
            });
            prev = NodeId(base + i);
        }
        q.output = prev;
        Some(q)
    }

    fn usage(program: &WorkflowProgram, candidates: &[WorkflowProgram]) -> Usage {
        Usage {
            prompt_tokens: 32 + 8 * program.size() as u64,
            completion_tokens: candidates.iter().map(|c| 4 * c.size() as u64).sum(),
        }
    }
}

impl Proposer for SyntheticProposer {
    fn propose(&self, program: &WorkflowProgram, count: usize, seed: u64) -> Result<Proposal, HarnessError> {
        let report = validate_program(program, &self.registry);
        if !report.is_ok() {
            return Err(WorkflowError::Invalid(report.messages()).into());
        }
        let mut all = self.neighbors(program);
        if self.distractors {
            let mut seen: BTreeSet<String> = all.iter().map(|c| c.key()).collect();
            if let Ok(c) = program.canonicalize(&self.registry) {
                seen.insert(c.key());
            }
            let mut extra: Vec<WorkflowProgram> = all.iter().filter_map(|c| self.bloat(c)).collect();
            extra.extend(self.distractor_edits(program));
            for raw in extra {
                self.accept(raw, usize::MAX, &mut seen, &mut all);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ program_hash(program));
        all.shuffle(&mut rng);
        all.truncate(count);
        let usage = Self::usage(program, &all);
        Ok(Proposal {
            candidates: all,
            usage,
        })
    }
}

/// Answer-matching rule of the evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    /// `|out - expected| <= tol`.
    Absolute(f64),
    /// `|out - expected| <= tol * max(1, |expected|)`, for registries with
    /// irrational operators.
    Relative(f64),
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::Absolute(1e-9)
    }
}

impl Tolerance {
    pub fn matches(self, out: f64, expected: f64) -> bool {
        let d = (out - expected).abs();
        match self {
            Tolerance::Absolute(t) => d <= t,
            Tolerance::Relative(t) => d <= t * expected.abs().max(1.0),
        }
    }
}

/// Runs the interpreter on each problem; reward is the fraction answered
/// within tolerance. Runtime violations count as wrong answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEvaluator {
    pub registry: OperatorRegistry,
    #[serde(default)]
    pub tolerance: Tolerance,
}

impl SyntheticEvaluator {
    pub fn new(registry: OperatorRegistry) -> Self {
        Self {
            registry,
            tolerance: Tolerance::default(),
        }
    }
}

impl Evaluator for SyntheticEvaluator {
    fn evaluate(&self, program: &WorkflowProgram, problems: &[Problem]) -> Result<Evaluation, HarnessError> {
        if problems.is_empty() {
            return Err(HarnessError::EmptyBatch);
        }
        let mut traces = Vec::with_capacity(problems.len());
        let mut correct = 0usize;
        for p in problems {
            let mut t = interpret(program, &self.registry, &p.inputs)?;
            t.input_constants.extend_from_slice(&p.constants);
            if t.success && t.output.is_some_and(|o| self.tolerance.matches(o, p.expected)) {
                correct += 1;
            }
            traces.push(t);
        }
        let usage = Usage {
            prompt_tokens: 8 * program.size() as u64 + problems.iter().map(|p| 4 * (p.inputs.len() as u64 + 1)).sum::<u64>(),
            completion_tokens: traces.iter().map(|t| 2 * t.values.len() as u64 + 1).sum(),
        };
        Ok(Evaluation {
            reward: correct as f64 / problems.len() as f64,
            traces,
            usage,
        })
    }
}

/// Parameters of a generated suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSpec {
    /// Registry operator names.
    pub operators: Vec<String>,
    pub inputs: usize,
    /// Operator cap of the proposer that generates targets.
    pub max_ops: usize,
    /// Length of the random edit walk that produces each hidden target.
    pub target_edits: usize,
    /// Inclusive range of the integer inputs.
    pub input_range: [i32; 2],
    pub split_ratio: [u32; 2],
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            operators: OperatorRegistry::baseline().names(),
            inputs: 2,
            max_ops: 3,
            target_edits: 2,
            input_range: [1, 9],
            split_ratio: [1, 4],
        }
    }
}

const SUITE_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSuite {
    pub registry: OperatorRegistry,
    /// Inputs only; the output is the first input.
    pub initial: WorkflowProgram,
    /// Hidden target per category, in category order.
    pub targets: Vec<(String, WorkflowProgram)>,
    pub problems: ProblemSet,
}

impl SyntheticSuite {
    pub fn target(&self) -> &WorkflowProgram {
        &self.targets[0].1
    }

    pub fn proposer(&self, max_ops: usize) -> SyntheticProposer {
        SyntheticProposer::new(self.registry.clone(), max_ops)
    }

    pub fn evaluator(&self) -> SyntheticEvaluator {
        SyntheticEvaluator::new(self.registry.clone())
    }
}

/// [`SuiteSpec::generate`] with default parameters.
pub fn make_synthetic_suite(seed: u64, n_problems: usize, category_count: usize) -> Result<SyntheticSuite, HarnessError> {
    SuiteSpec::default().generate(seed, n_problems, category_count)
}

impl SuiteSpec {
    /// Builds one hidden target per category by a seeded walk of proposer
    /// edits from the initial program, samples integer inputs, and labels
    /// each problem with its category target's output. Targets that hit a
    /// runtime violation, return a constant, or agree with the initial
    /// program on every problem are resampled.
    pub fn generate(&self, seed: u64, n_problems: usize, category_count: usize) -> Result<SyntheticSuite, HarnessError> {
        if n_problems < 5 || category_count == 0 || self.inputs == 0 || self.input_range[0] > self.input_range[1] {
            return Err(HarnessError::Config(format!(
                "suite needs >= 5 problems, >= 1 category and >= 1 input (got {n_problems}, {category_count}, {})",
                self.inputs
            )));
        }
        let registry = OperatorRegistry::from_names(&self.operators)?;
        let nodes: Vec<Node> = (0..self.inputs as u32).map(Node::input).collect();
        let initial = WorkflowProgram {
            roots: nodes.iter().map(|n| n.id).collect(),
            nodes,
            edges: vec![],
            output: NodeId(0),
        };
        let proposer = SyntheticProposer::new(registry.clone(), self.max_ops);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let categories: Vec<String> = (0..category_count).map(|i| format!("c{i}")).collect();

        let mut inputs: Vec<BTreeMap<NodeId, f64>> = Vec::with_capacity(n_problems);
        for _ in 0..n_problems {
            inputs.push(
                initial
                    .roots
                    .iter()
                    .map(|r| (*r, rng.random_range(self.input_range[0]..=self.input_range[1]) as f64))
                    .collect(),
            );
        }

        let mut targets = Vec::new();
        for (ci, cat) in categories.iter().enumerate() {
            let rows: Vec<&BTreeMap<NodeId, f64>> = inputs.iter().skip(ci).step_by(category_count).collect();
            let mut found = None;
            for _ in 0..SUITE_ATTEMPTS {
                let mut cur = initial.clone();
                for _ in 0..self.target_edits {
                    let next = proposer.neighbors(&cur);
                    if next.is_empty() {
                        break;
                    }
                    cur = next[rng.random_range(0..next.len())].clone();
                }
                if self.acceptable(&cur, &initial, &registry, &rows)? {
                    found = Some(cur);
                    break;
                }
            }
            let t = found.ok_or(HarnessError::Degenerate(SUITE_ATTEMPTS))?;
            targets.push((cat.clone(), t));
        }

        let mut problems = Vec::with_capacity(n_problems);
        for (i, inp) in inputs.into_iter().enumerate() {
            let (cat, target) = &targets[i % category_count];
            let t = interpret(target, &registry, &inp)?;
            problems.push(Problem {
                inputs: inp,
                expected: t.output.expect("accepted targets succeed"),
                category: cat.clone(),
                constants: vec![],
                split: Default::default(),
            });
        }
        problems.shuffle(&mut rng);
        Ok(SyntheticSuite {
            registry,
            initial,
            targets,
            problems: ProblemSet::split(problems, self.split_ratio)?,
        })
    }

    fn acceptable(
        &self,
        cand: &WorkflowProgram,
        initial: &WorkflowProgram,
        registry: &OperatorRegistry,
        rows: &[&BTreeMap<NodeId, f64>],
    ) -> Result<bool, HarnessError> {
        if cand.op_count() == 0 || cand.nodes.iter().any(|n| n.op != INPUT_OP && cand.roots.contains(&n.id)) {
            return Ok(false);
        }
        let mut outs = Vec::new();
        let mut differs = false;
        for row in rows {
            let t = interpret(cand, registry, row)?;
            let (Some(o), true) = (t.output, t.success) else {
                return Ok(false);
            };
            let base = interpret(initial, registry, row)?.output;
            differs |= base != Some(o);
            outs.push(o);
        }
        let varies = outs.windows(2).any(|w| w[0] != w[1]);
        Ok(differs && (varies || outs.len() < 2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::ProgramBuilder;

    #[test]
    fn trivial_program_only_grows() {
        let reg = OperatorRegistry::baseline();
        let prop = SyntheticProposer::new(reg.clone(), 3);
        let mut b = ProgramBuilder::new();
        let x = b.input();
        let p = b.build(x);
        let n = prop.neighbors(&p);
        assert!(!n.is_empty());
        assert!(n.iter().all(|c| c.op_count() == 1));
    }

    #[test]
    fn proposals_are_valid_distinct_and_deterministic() {
        let reg = OperatorRegistry::baseline();
        let prop = SyntheticProposer::new(reg.clone(), 4);
        let mut b = ProgramBuilder::new();
        let x = b.input();
        let y = b.input();
        let a = b.op("add", &[x, y]);
        let m = b.op("mul", &[a, x]);
        let n = b.op("neg", &[m]);
        let p = b.build(n).canonicalize(&reg).unwrap();
        assert_eq!(p.nodes.len(), 5);
        let one = prop.propose(&p, 8, 42).unwrap();
        assert_eq!(one.candidates.len(), 8);
        let keys: BTreeSet<String> = one.candidates.iter().map(|c| c.key()).collect();
        assert_eq!(keys.len(), 8);
        assert!(one.candidates.iter().all(|c| validate_program(c, &reg).is_ok()));
        assert_eq!(prop.propose(&p, 8, 42).unwrap(), one);
    }

    #[test]
    fn delete_unary_restores_parent() {
        let reg = OperatorRegistry::baseline();
        let prop = SyntheticProposer::new(reg.clone(), 3);
        let mut b = ProgramBuilder::new();
        let x = b.input();
        let y = b.input();
        let a = b.op("mul", &[x, y]);
        let base = b.build(a).canonicalize(&reg).unwrap();
        let n = b.op("neg", &[a]);
        let wrapped = b.build(n).canonicalize(&reg).unwrap();
        assert!(prop.neighbors(&wrapped).contains(&base));
    }

    #[test]
    fn distractors_appear_only_when_enabled() {
        let reg = OperatorRegistry::baseline();
        let mut prop = SyntheticProposer::new(reg, 3);
        let mut b = ProgramBuilder::new();
        let x = b.input();
        let p = b.build(x);
        let clean = prop.propose(&p, usize::MAX, 1).unwrap().candidates.len();
        prop.distractors = true;
        let dirty = prop.propose(&p, usize::MAX, 1).unwrap().candidates.len();
        // one bloated twin per regular edit plus four wraps of the output
        assert_eq!(dirty, 2 * clean + 4);
    }

    #[test]
    fn constant_program_matches_by_hand() {
        // the output ignores the inputs and is always 6
        let reg = OperatorRegistry::baseline();
        let mut b = ProgramBuilder::new();
        let _x = b.input();
        let c = b.constant(6.0);
        let p = b.build(c);
        let probs: Vec<Problem> = [6.0, 7.0, 6.0, 1.0]
            .iter()
            .map(|e| Problem {
                inputs: BTreeMap::from([(NodeId(0), 1.0)]),
                expected: *e,
                category: "a".into(),
                constants: vec![],
                split: Default::default(),
            })
            .collect();
        let ev = SyntheticEvaluator::new(reg);
        assert_eq!(ev.evaluate(&p, &probs).unwrap().reward, 0.5);
        assert!(matches!(ev.evaluate(&p, &[]), Err(HarnessError::EmptyBatch)));
    }

    #[test]
    fn suite_targets_score_one() {
        let s = make_synthetic_suite(42, 10, 1).unwrap();
        assert_eq!(s.problems.validation().len(), 2);
        assert_eq!(s.problems.test().len(), 8);
        let ev = s.evaluator();
        assert_eq!(ev.evaluate(s.target(), &s.problems.validation()).unwrap().reward, 1.0);
        assert_eq!(ev.evaluate(s.target(), &s.problems.test()).unwrap().reward, 1.0);
        assert_eq!(make_synthetic_suite(42, 10, 1).unwrap(), s);
    }

    #[test]
    fn multi_category_targets_score_one_on_their_problems() {
        let s = make_synthetic_suite(7, 30, 3).unwrap();
        let ev = s.evaluator();
        for (cat, t) in &s.targets {
            let mine: Vec<Problem> = s.problems.problems.iter().filter(|p| &p.category == cat).cloned().collect();
            assert_eq!(ev.evaluate(t, &mine).unwrap().reward, 1.0);
        }
    }
}
