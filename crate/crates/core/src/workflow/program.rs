//! Operator-graph workflow programs and their structural validation.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::operator::{OperatorRegistry, CONST_OP, INPUT_OP};
use super::units::{Shape, UnitSignature};
use super::WorkflowError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: NodeId,
    /// Registry operator name, or `input` / `const` for roots.
    pub op: String,
    /// Literal value of a `const` root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<UnitSignature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
}

impl Node {
    pub fn input(id: u32) -> Self {
        Self::new(id, INPUT_OP)
    }

    pub fn constant(id: u32, value: f64) -> Self {
        Self {
            value: Some(value),
            ..Self::new(id, CONST_OP)
        }
    }

    pub fn op(id: u32, op: &str) -> Self {
        Self::new(id, op)
    }

    fn new(id: u32, op: &str) -> Self {
        Self {
            id: NodeId(id),
            op: op.to_string(),
            value: None,
            unit: None,
            shape: None,
        }
    }

    pub fn with_unit(mut self, unit: UnitSignature) -> Self {
        self.unit = Some(unit);
        self
    }

    pub fn with_shape(mut self, shape: Shape) -> Self {
        self.shape = Some(shape);
        self
    }

    pub fn is_root_op(&self) -> bool {
        self.op == INPUT_OP || self.op == CONST_OP
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub slot: usize,
}

impl Edge {
    pub fn new(from: u32, to: u32, slot: usize) -> Self {
        Self {
            from: NodeId(from),
            to: NodeId(to),
            slot,
        }
    }
}

/// A directed acyclic operator graph with one output node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowProgram {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub roots: Vec<NodeId>,
    pub output: NodeId,
}

/// A structural problem found by [`validate_program`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateNode(NodeId),
    UnknownOperator { node: NodeId, op: String },
    RootNotDeclared { node: NodeId },
    RootMissing(NodeId),
    RootWithOperator { node: NodeId, op: String },
    RootWithInput { node: NodeId },
    ConstWithoutValue(NodeId),
    DanglingEdge { from: NodeId, to: NodeId },
    SlotOutOfRange { node: NodeId, slot: usize },
    DuplicateSlot { node: NodeId, slot: usize },
    MissingSlot { node: NodeId, slot: usize },
    Cycle(Vec<NodeId>),
    OutputMissing(NodeId),
    OutputUnreachable(NodeId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNode(n) => write!(f, "node {n}: duplicate id"),
            Violation::UnknownOperator { node, op } => write!(f, "node {node}: unknown operator `{op}`"),
            Violation::RootNotDeclared { node } => write!(f, "node {node}: root operator but not listed in roots"),
            Violation::RootMissing(n) => write!(f, "root {n}: no such node"),
            Violation::RootWithOperator { node, op } => write!(f, "root {node}: has operator `{op}`"),
            Violation::RootWithInput { node } => write!(f, "root {node}: has an incoming edge"),
            Violation::ConstWithoutValue(n) => write!(f, "node {n}: const without value"),
            Violation::DanglingEdge { from, to } => write!(f, "edge {from}->{to}: unknown endpoint"),
            Violation::SlotOutOfRange { node, slot } => write!(f, "node {node}: input slot {slot} out of range"),
            Violation::DuplicateSlot { node, slot } => write!(f, "node {node}: input slot {slot} wired twice"),
            Violation::MissingSlot { node, slot } => write!(f, "node {node}: missing input slot {slot}"),
            Violation::Cycle(nodes) => {
                let ids: Vec<String> = nodes.iter().map(|n| n.to_string()).collect();
                write!(f, "cycle through nodes [{}]", ids.join(", "))
            }
            Violation::OutputMissing(n) => write!(f, "output {n}: no such node"),
            Violation::OutputUnreachable(n) => write!(f, "output {n}: not reachable from any root"),
        }
    }
}

/// Outcome of [`validate_program`]; violations are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.to_string()).collect()
    }
}

pub fn validate_program(program: &WorkflowProgram, registry: &OperatorRegistry) -> ValidationReport {
    let mut violations = Vec::new();
    let mut pos = BTreeMap::new();
    for (i, node) in program.nodes.iter().enumerate() {
        if pos.insert(node.id, i).is_some() {
            violations.push(Violation::DuplicateNode(node.id));
        }
    }
    let roots: BTreeSet<NodeId> = program.roots.iter().copied().collect();
    for r in &program.roots {
        if !pos.contains_key(r) {
            violations.push(Violation::RootMissing(*r));
        }
    }
    for node in &program.nodes {
        let is_root = roots.contains(&node.id);
        match (is_root, node.is_root_op()) {
            (true, false) => violations.push(Violation::RootWithOperator {
                node: node.id,
                op: node.op.clone(),
            }),
            (false, true) => violations.push(Violation::RootNotDeclared { node: node.id }),
            (false, false) if registry.get(&node.op).is_none() => violations.push(Violation::UnknownOperator {
                node: node.id,
                op: node.op.clone(),
            }),
            _ => {}
        }
        if node.op == CONST_OP && node.value.is_none() {
            violations.push(Violation::ConstWithoutValue(node.id));
        }
    }

    let mut slots: BTreeMap<NodeId, BTreeSet<usize>> = BTreeMap::new();
    for e in &program.edges {
        if !pos.contains_key(&e.from) || !pos.contains_key(&e.to) {
            violations.push(Violation::DanglingEdge { from: e.from, to: e.to });
            continue;
        }
        if roots.contains(&e.to) {
            violations.push(Violation::RootWithInput { node: e.to });
            continue;
        }
        let arity = registry.get(&program.nodes[pos[&e.to]].op).map(|o| o.arity);
        if let Some(arity) = arity {
            if e.slot >= arity {
                violations.push(Violation::SlotOutOfRange { node: e.to, slot: e.slot });
                continue;
            }
        }
        if !slots.entry(e.to).or_default().insert(e.slot) {
            violations.push(Violation::DuplicateSlot { node: e.to, slot: e.slot });
        }
    }
    for node in &program.nodes {
        if roots.contains(&node.id) {
            continue;
        }
        if let Some(op) = registry.get(&node.op) {
            let wired = slots.get(&node.id);
            for slot in 0..op.arity {
                if !wired.is_some_and(|s| s.contains(&slot)) {
                    violations.push(Violation::MissingSlot { node: node.id, slot });
                }
            }
        }
    }

    if let Some(cycle) = find_cycle(program, &pos) {
        violations.push(Violation::Cycle(cycle));
    }

    match pos.get(&program.output) {
        None => violations.push(Violation::OutputMissing(program.output)),
        Some(_) => {
            let reachable = reachable_from_roots(program, &pos);
            if !reachable.contains(&program.output) {
                violations.push(Violation::OutputUnreachable(program.output));
            }
        }
    }
    ValidationReport { violations }
}

fn find_cycle(program: &WorkflowProgram, pos: &BTreeMap<NodeId, usize>) -> Option<Vec<NodeId>> {
    let n = program.nodes.len();
    let mut succ = vec![Vec::new(); n];
    for e in &program.edges {
        if let (Some(&a), Some(&b)) = (pos.get(&e.from), pos.get(&e.to)) {
            succ[a].push(b);
        }
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut color = vec![0u8; n];
    let mut stack: Vec<usize> = Vec::new();
    fn dfs(v: usize, succ: &[Vec<usize>], color: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        color[v] = 1;
        stack.push(v);
        for &w in &succ[v] {
            if color[w] == 1 {
                let start = stack.iter().position(|&x| x == w).unwrap();
                return Some(stack[start..].to_vec());
            }
            if color[w] == 0 {
                if let Some(c) = dfs(w, succ, color, stack) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        color[v] = 2;
        None
    }
    for v in 0..n {
        if color[v] == 0 {
            if let Some(c) = dfs(v, &succ, &mut color, &mut stack) {
                return Some(c.into_iter().map(|i| program.nodes[i].id).collect());
            }
        }
    }
    None
}

fn reachable_from_roots(program: &WorkflowProgram, pos: &BTreeMap<NodeId, usize>) -> BTreeSet<NodeId> {
    let mut seen: BTreeSet<NodeId> = program.roots.iter().filter(|r| pos.contains_key(r)).copied().collect();
    let mut frontier: Vec<NodeId> = seen.iter().copied().collect();
    while let Some(v) = frontier.pop() {
        for e in program.edges.iter().filter(|e| e.from == v) {
            if pos.contains_key(&e.to) && seen.insert(e.to) {
                frontier.push(e.to);
            }
        }
    }
    seen
}

/// Positional index over a validated program: slot-ordered inputs and a
/// deterministic topological order.
#[derive(Debug, Clone)]
pub struct ProgramIndex<'a> {
    pub program: &'a WorkflowProgram,
    pos: BTreeMap<NodeId, usize>,
    inputs: Vec<Vec<usize>>,
    is_root: Vec<bool>,
    topo: Vec<usize>,
}

impl<'a> ProgramIndex<'a> {
    pub fn new(program: &'a WorkflowProgram, registry: &OperatorRegistry) -> Result<Self, WorkflowError> {
        let report = validate_program(program, registry);
        if !report.is_ok() {
            return Err(WorkflowError::Invalid(report.messages()));
        }
        let pos: BTreeMap<NodeId, usize> = program.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let n = program.nodes.len();
        let mut slotted: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut indegree = vec![0usize; n];
        let mut succ = vec![Vec::new(); n];
        for e in &program.edges {
            let (a, b) = (pos[&e.from], pos[&e.to]);
            slotted[b].push((e.slot, a));
            indegree[b] += 1;
            succ[a].push(b);
        }
        let inputs = slotted
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s.into_iter().map(|(_, a)| a).collect()
            })
            .collect();
        let roots: BTreeSet<NodeId> = program.roots.iter().copied().collect();
        let is_root = program.nodes.iter().map(|n| roots.contains(&n.id)).collect();

        // Kahn's algorithm, always releasing the lowest position first.
        let mut ready: BinaryHeap<Reverse<usize>> =
            (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(Reverse(v)) = ready.pop() {
            topo.push(v);
            for &w in &succ[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    ready.push(Reverse(w));
                }
            }
        }
        Ok(Self {
            program,
            pos,
            inputs,
            is_root,
            topo,
        })
    }

    pub fn len(&self) -> usize {
        self.program.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.program.nodes.is_empty()
    }

    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.pos.get(&id).copied()
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.program.nodes[i]
    }

    /// Producer positions in slot order.
    pub fn inputs(&self, i: usize) -> &[usize] {
        &self.inputs[i]
    }

    pub fn is_root(&self, i: usize) -> bool {
        self.is_root[i]
    }

    pub fn output(&self) -> usize {
        self.pos[&self.program.output]
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    /// Longest root-to-node path length in edges, for every node.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.len()];
        for &v in &self.topo {
            depth[v] = self.inputs[v].iter().map(|&u| depth[u] + 1).max().unwrap_or(0);
        }
        depth
    }

    /// Nodes the output depends on, including the output itself.
    pub fn live(&self) -> Vec<bool> {
        let mut live = vec![false; self.len()];
        let mut stack = vec![self.output()];
        while let Some(v) = stack.pop() {
            if !live[v] {
                live[v] = true;
                stack.extend(self.inputs[v].iter().copied());
            }
        }
        live
    }
}

impl WorkflowProgram {
    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Number of nodes plus number of edges.
    pub fn size(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }

    /// Number of non-root nodes.
    pub fn op_count(&self) -> usize {
        self.nodes.iter().filter(|n| !self.roots.contains(&n.id)).count()
    }

    pub fn next_id(&self) -> u32 {
        self.nodes.iter().map(|n| n.id.0 + 1).max().unwrap_or(0)
    }

    /// Rewrites the program into canonical form: input roots keep their ids,
    /// dead operator nodes and unused constants are dropped, and the live
    /// operator nodes are renumbered in post-order from the output (inputs
    /// visited in slot order). Structurally identical programs canonicalize
    /// to identical values.
    pub fn canonicalize(&self, registry: &OperatorRegistry) -> Result<Self, WorkflowError> {
        let index = ProgramIndex::new(self, registry)?;
        let live = index.live();
        let mut order: Vec<usize> = Vec::new();
        let mut visited = vec![false; index.len()];
        fn post(v: usize, index: &ProgramIndex<'_>, visited: &mut [bool], order: &mut Vec<usize>) {
            if visited[v] {
                return;
            }
            visited[v] = true;
            for &u in index.inputs(v) {
                post(u, index, visited, order);
            }
            order.push(v);
        }
        post(index.output(), &index, &mut visited, &mut order);

        let kept_roots: Vec<NodeId> = self
            .roots
            .iter()
            .copied()
            .filter(|r| {
                let i = index.position(*r).unwrap();
                self.nodes[i].op == INPUT_OP || live[i]
            })
            .collect();
        let mut next = kept_roots
            .iter()
            .filter(|r| self.nodes[index.position(**r).unwrap()].op == INPUT_OP)
            .map(|r| r.0 + 1)
            .max()
            .unwrap_or(0);
        let mut remap: BTreeMap<usize, NodeId> = BTreeMap::new();
        let mut nodes = Vec::new();
        let mut roots = Vec::new();
        // input roots keep their ids; surviving constants are renumbered after them
        for r in &kept_roots {
            let i = index.position(*r).unwrap();
            if self.nodes[i].op == INPUT_OP {
                remap.insert(i, *r);
            }
        }
        for r in &kept_roots {
            let i = index.position(*r).unwrap();
            if self.nodes[i].op != INPUT_OP {
                remap.insert(i, NodeId(next));
                next += 1;
            }
            let mut node = self.nodes[i].clone();
            node.id = remap[&i];
            nodes.push(node);
            roots.push(remap[&i]);
        }
        for &v in &order {
            if index.is_root(v) {
                continue;
            }
            remap.insert(v, NodeId(next));
            next += 1;
            let mut node = self.nodes[v].clone();
            node.id = remap[&v];
            nodes.push(node);
        }
        let mut edges = Vec::new();
        for &v in &order {
            if index.is_root(v) {
                continue;
            }
            for (slot, &u) in index.inputs(v).iter().enumerate() {
                edges.push(Edge {
                    from: remap[&u],
                    to: remap[&v],
                    slot,
                });
            }
        }
        Ok(Self {
            nodes,
            edges,
            roots,
            output: remap[&index.output()],
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, WorkflowError> {
        serde_json::from_str(text).map_err(|e| WorkflowError::Parse(e.to_string()))
    }

    /// Compact single-line key; equal for equal programs.
    pub fn key(&self) -> String {
        serde_json::to_string(self).expect("program serializes")
    }
}

/// Small builder for hand-written programs.
#[derive(Debug, Default, Clone)]
pub struct ProgramBuilder {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    roots: Vec<NodeId>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn next(&self) -> u32 {
        self.nodes.len() as u32
    }

    pub fn input(&mut self) -> NodeId {
        let id = self.next();
        self.nodes.push(Node::input(id));
        self.roots.push(NodeId(id));
        NodeId(id)
    }

    pub fn input_with_unit(&mut self, unit: UnitSignature) -> NodeId {
        let id = self.input();
        self.nodes.last_mut().unwrap().unit = Some(unit);
        id
    }

    pub fn constant(&mut self, value: f64) -> NodeId {
        let id = self.next();
        self.nodes.push(Node::constant(id, value));
        self.roots.push(NodeId(id));
        NodeId(id)
    }

    pub fn op(&mut self, op: &str, args: &[NodeId]) -> NodeId {
        let id = self.next();
        self.nodes.push(Node::op(id, op));
        for (slot, a) in args.iter().enumerate() {
            self.edges.push(Edge {
                from: *a,
                to: NodeId(id),
                slot,
            });
        }
        NodeId(id)
    }

    pub fn tag_unit(&mut self, id: NodeId, unit: UnitSignature) -> &mut Self {
        self.nodes.iter_mut().find(|n| n.id == id).unwrap().unit = Some(unit);
        self
    }

    pub fn tag_shape(&mut self, id: NodeId, shape: Shape) -> &mut Self {
        self.nodes.iter_mut().find(|n| n.id == id).unwrap().shape = Some(shape);
        self
    }

    pub fn build(&self, output: NodeId) -> WorkflowProgram {
        WorkflowProgram {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            roots: self.roots.clone(),
            output,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg() -> OperatorRegistry {
        OperatorRegistry::baseline()
    }

    #[test]
    fn add_with_one_wired_slot_reports_missing_slot_1() {
        let mut b = ProgramBuilder::new();
        let x = b.input();
        let a = b.op("add", &[x]);
        let report = validate_program(&b.build(a), &reg());
        assert!(!report.is_ok());
        assert!(report.messages().iter().any(|m| m.contains("missing input slot 1")), "{report:?}");
    }

    #[test]
    fn two_node_cycle_is_reported() {
        let p = WorkflowProgram {
            nodes: vec![Node::input(0), Node::op(1, "neg"), Node::op(2, "neg")],
            edges: vec![Edge::new(1, 2, 0), Edge::new(2, 1, 0)],
            roots: vec![NodeId(0)],
            output: NodeId(2),
        };
        let report = validate_program(&p, &reg());
        assert!(report.violations.iter().any(|v| matches!(v, Violation::Cycle(_))));
        assert!(report.messages().iter().any(|m| m.starts_with("cycle")));
    }

    #[test]
    fn minimal_mul_chain_is_valid() {
        let mut b = ProgramBuilder::new();
        let x = b.input();
        let y = b.input();
        let m = b.op("mul", &[x, y]);
        assert!(validate_program(&b.build(m), &reg()).is_ok());
    }

    #[test]
    fn structural_violations_are_named() {
        let p = WorkflowProgram {
            nodes: vec![Node::input(0), Node::op(1, "frob"), Node::op(0, "neg"), Node::op(3, CONST_OP)],
            edges: vec![Edge::new(0, 9, 0), Edge::new(1, 0, 0)],
            roots: vec![NodeId(0), NodeId(5)],
            output: NodeId(7),
        };
        let msgs = validate_program(&p, &reg()).messages().join("\n");
        for needle in ["duplicate id", "unknown operator", "root 5", "not listed in roots", "without value", "unknown endpoint", "has an incoming edge", "output 7"] {
            assert!(msgs.contains(needle), "missing `{needle}` in\n{msgs}");
        }
    }

    #[test]
    fn unreachable_output_and_bad_slots() {
        let p = WorkflowProgram {
            nodes: vec![Node::input(0), Node::op(1, "neg"), Node::op(2, "add")],
            edges: vec![Edge::new(0, 1, 3), Edge::new(0, 2, 0), Edge::new(0, 2, 0)],
            roots: vec![NodeId(0)],
            output: NodeId(1),
        };
        let msgs = validate_program(&p, &reg()).messages().join("\n");
        assert!(msgs.contains("input slot 3 out of range"), "{msgs}");
        assert!(msgs.contains("slot 0 wired twice"), "{msgs}");
        let lone = WorkflowProgram {
            nodes: vec![Node::input(0), Node::op(1, "neg")],
            edges: vec![],
            roots: vec![NodeId(0)],
            output: NodeId(1),
        };
        let msgs = validate_program(&lone, &reg()).messages().join("\n");
        assert!(msgs.contains("not reachable"), "{msgs}");
    }

    #[test]
    fn canonical_form_drops_dead_nodes_and_renumbers() {
        let p = WorkflowProgram {
            nodes: vec![
                Node::input(0),
                Node::input(1),
                Node::op(9, "mul"),
                Node::op(4, "neg"),
                Node::constant(7, 3.0),
            ],
            edges: vec![Edge::new(1, 9, 0), Edge::new(0, 9, 1), Edge::new(0, 4, 0)],
            roots: vec![NodeId(0), NodeId(1), NodeId(7)],
            output: NodeId(9),
        };
        let c = p.canonicalize(&reg()).unwrap();
        assert_eq!(c.roots, vec![NodeId(0), NodeId(1)]);
        assert_eq!(c.nodes.len(), 3);
        assert_eq!(c.output, NodeId(2));
        assert_eq!(c.edges, vec![Edge::new(1, 2, 0), Edge::new(0, 2, 1)]);
        assert_eq!(c.canonicalize(&reg()).unwrap(), c);
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let mut b = ProgramBuilder::new();
        let x = b.input_with_unit(UnitSignature::base("length"));
        let c = b.constant(-0.1);
        let s = b.op("mul", &[x, c]);
        b.tag_shape(s, Shape::Matrix(2, 3));
        let text = b.build(s).to_json();
        let back = WorkflowProgram::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert!(WorkflowProgram::from_json(r#"{"nodes":[],"edges":[],"roots":[],"output":0,"extra":1}"#).is_err());
    }
}
