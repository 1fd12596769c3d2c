use serde::{Deserialize, Serialize};

use crate::constraints::{AggregationConfig, ConstraintVector};
use crate::workflow::{WorkflowProgram, WorkflowState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub id: usize,
    pub program: WorkflowProgram,
    pub state: WorkflowState,
    /// N: simulations credited through this node.
    pub visits: u64,
    /// W: sum of credited (possibly shaped) values.
    pub total_value: f64,
    /// Simulations run on this node's own program.
    pub own_simulations: u64,
    /// Sum of raw rewards of this node's own simulations.
    pub reward_sum: f64,
    /// Most recent C_total: post-simulation when available, static otherwise.
    pub compliance: f64,
    pub scores: ConstraintVector,
    /// Pre-execution scores, kept so re-simulation starts from them.
    pub static_scores: ConstraintVector,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Tree depth; the root is 0.
    pub depth: usize,
    pub expanded: bool,
    /// Expanded but the proposer offered nothing.
    pub terminal: bool,
}

impl SearchNode {
    pub fn q(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.total_value / self.visits as f64
        }
    }

    pub fn mean_reward(&self) -> Option<f64> {
        (self.own_simulations > 0).then(|| self.reward_sum / self.own_simulations as f64)
    }
}

/// `(Q + c*U) * exp(lambda * C_total)` with `U = sqrt(ln N_parent / N)`.
/// Unvisited nodes score `+inf`.
pub fn selection_score(node: &SearchNode, parent_visits: u64, cfg: &AggregationConfig) -> f64 {
    if node.visits == 0 {
        return f64::INFINITY;
    }
    let u = ((parent_visits.max(1) as f64).ln() / node.visits as f64).sqrt();
    (node.q() + cfg.uct_c * u) * (cfg.lambda_shaping * node.compliance).exp()
}

/// Arena of search nodes; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
}

impl SearchTree {
    pub fn new(program: WorkflowProgram, state: WorkflowState, scores: ConstraintVector, compliance: f64) -> Self {
        Self {
            nodes: vec![SearchNode {
                id: 0,
                program,
                state,
                visits: 0,
                total_value: 0.0,
                own_simulations: 0,
                reward_sum: 0.0,
                compliance,
                scores,
                static_scores: scores,
                parent: None,
                children: Vec::new(),
                depth: 0,
                expanded: false,
                terminal: false,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[0]
    }

    pub fn add_child(
        &mut self,
        parent: usize,
        program: WorkflowProgram,
        state: WorkflowState,
        scores: ConstraintVector,
        compliance: f64,
    ) -> usize {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(SearchNode {
            id,
            program,
            state,
            visits: 0,
            total_value: 0.0,
            own_simulations: 0,
            reward_sum: 0.0,
            compliance,
            scores,
            static_scores: scores,
            parent: Some(parent),
            children: Vec::new(),
            depth,
            expanded: false,
            terminal: false,
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Credits `value` and one visit to `id` and every ancestor.
    pub fn backpropagate(&mut self, id: usize, value: f64) {
        let mut cur = Some(id);
        while let Some(i) = cur {
            let n = &mut self.nodes[i];
            n.visits += 1;
            n.total_value += value;
            cur = n.parent;
        }
    }

    /// Checks `N = sum(children N) + own simulations` at every node.
    pub fn check_consistency(&self) -> Result<(), String> {
        for n in &self.nodes {
            let child: u64 = n.children.iter().map(|c| self.nodes[*c].visits).sum();
            if n.visits != child + n.own_simulations {
                return Err(format!(
                    "node {}: N = {} but children sum {} + own {}",
                    n.id, n.visits, child, n.own_simulations
                ));
            }
        }
        Ok(())
    }
}

/// Descends from the root by argmax shaped score, lowest index on ties,
/// until reaching an unexpanded node or a childless one.
pub fn select(tree: &SearchTree, cfg: &AggregationConfig) -> usize {
    let mut v = 0;
    loop {
        let node = &tree.nodes[v];
        if !node.expanded || node.children.is_empty() {
            return v;
        }
        let mut best = node.children[0];
        let mut best_score = f64::NEG_INFINITY;
        for &c in &node.children {
            let s = selection_score(&tree.nodes[c], node.visits, cfg);
            if s > best_score {
                best = c;
                best_score = s;
            }
        }
        v = best;
    }
}
