use crate::adaptive::{adapt, ObservationBuffer, WeightVector};
use crate::constraints::{AggregationConfig, ConstraintVector};
use crate::harness::{Evaluation, Evaluator, HarnessError, Problem, Proposer, Role, Usage};
use crate::motif::MotifLibrary;
use crate::workflow::{derive_state, validate_program, WorkflowError, WorkflowProgram, WorkflowState};

use super::log::{Event, LogRecord, RunLog};
use super::tree::{select, SearchTree};
use super::{SearchConfig, SearchError};

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Highest mean simulated reward; ties go to higher compliance, then to
    /// the earlier node. The initial program when nothing was simulated.
    pub best: WorkflowProgram,
    pub best_node: Option<usize>,
    pub best_reward: Option<f64>,
    pub tree: SearchTree,
    pub log: RunLog,
    pub library: MotifLibrary,
    /// Weights in force at the end of each round.
    pub weight_trajectory: Vec<WeightVector>,
    pub simulations: usize,
}

struct Scored {
    program: WorkflowProgram,
    state: WorkflowState,
    scores: ConstraintVector,
    compliance: f64,
}

struct Search<'a> {
    cfg: &'a SearchConfig,
    proposer: &'a dyn Proposer,
    evaluator: &'a dyn Evaluator,
    problems: &'a [Problem],
    library: MotifLibrary,
    tree: SearchTree,
    log: RunLog,
    weights: WeightVector,
    buffer: ObservationBuffer,
    round: usize,
    observed: Vec<(String, Vec<f64>)>,
    simulations: usize,
    requests: usize,
    selection_cfg: AggregationConfig,
}

/// Runs `budget.rounds` rounds of `budget.simulations_per_round` iterations
/// each, starting from `initial`.
pub fn run_optimization(
    initial: &WorkflowProgram,
    proposer: &dyn Proposer,
    evaluator: &dyn Evaluator,
    problems: &[Problem],
    library: MotifLibrary,
    cfg: &SearchConfig,
) -> Result<SearchOutcome, SearchError> {
    cfg.validate()?;
    let report = validate_program(initial, &cfg.engine.registry);
    if !report.is_ok() {
        return Err(WorkflowError::Invalid(report.messages()).into());
    }
    if problems.is_empty() {
        return Err(SearchError::Config("empty validation batch".into()));
    }
    let mut selection_cfg = cfg.engine.aggregation;
    if !cfg.stages.selection {
        selection_cfg.lambda_shaping = 0.0;
    }
    let weights = cfg.initial_weights;
    let mut s = Search {
        cfg,
        proposer,
        evaluator,
        problems,
        tree: SearchTree {
            nodes: Vec::new(),
        },
        library,
        log: RunLog::default(),
        weights,
        buffer: ObservationBuffer::new(cfg.adaptation.window),
        round: 0,
        observed: Vec::new(),
        simulations: 0,
        requests: 0,
        selection_cfg,
    };
    let root = s.score(initial.clone())?;
    s.tree = SearchTree::new(root.program, root.state, root.scores, root.compliance);

    let mut trajectory = Vec::new();
    let budget = cfg.budget;
    if budget.simulations_per_round > 0 {
        for round in 0..budget.rounds {
            s.round = round;
            for _ in 0..budget.simulations_per_round {
                s.iterate()?;
            }
            s.end_round()?;
            trajectory.push(s.weights);
        }
    }

    let best_node = s
        .tree
        .nodes
        .iter()
        .filter_map(|n| n.mean_reward().map(|r| (n.id, r, n.compliance)))
        .fold(None, |best: Option<(usize, f64, f64)>, cur| match best {
            Some(b) if (cur.1, cur.2) <= (b.1, b.2) => Some(b),
            _ => Some(cur),
        });
    let (best, best_reward) = match best_node {
        Some((id, r, _)) => (s.tree.nodes[id].program.clone(), Some(r)),
        None => (initial.clone(), None),
    };
    Ok(SearchOutcome {
        best,
        best_node: best_node.map(|b| b.0),
        best_reward,
        tree: s.tree,
        log: s.log,
        library: s.library,
        weight_trajectory: trajectory,
        simulations: s.simulations,
    })
}

impl Search<'_> {
    fn score(&self, program: WorkflowProgram) -> Result<Scored, SearchError> {
        let engine = &self.cfg.engine;
        let state = derive_state(&program, &engine.registry, None)?;
        let scores = engine.static_scores(&program, &state, &self.cfg.category, &self.library)?;
        let compliance = engine.compliance(&scores, &self.weights)?;
        Ok(Scored {
            program,
            state,
            scores,
            compliance,
        })
    }

    fn next_request(&mut self, role: Role) -> String {
        self.requests += 1;
        format!("{role}-{}", self.requests)
    }

    fn iterate(&mut self) -> Result<(), SearchError> {
        let leaf = select(&self.tree, &self.selection_cfg);
        let node = &self.tree.nodes[leaf];
        let mut rec = LogRecord::new(self.round, Event::Selected);
        rec.node_id = Some(leaf);
        rec.c_vector = Some(node.scores.to_array());
        rec.c_total = Some(node.compliance);

        // the unvisited root, or a terminal node that can only be re-simulated
        if node.visits == 0 || node.expanded {
            self.log.push(rec);
            return self.simulate(&[leaf]);
        }

        let proposal = self.proposer.propose(
            &node.program,
            self.cfg.budget.max_candidates_per_expansion,
            self.cfg.budget.seed,
        )?;
        rec.role = Some(Role::Optimizer);
        rec.tokens_in = proposal.usage.prompt_tokens;
        rec.tokens_out = proposal.usage.completion_tokens;
        rec.request_id = Some(self.next_request(Role::Optimizer));
        self.log.push(rec);

        let kept = self.expand(leaf, proposal.candidates)?;
        if kept.is_empty() {
            self.simulate(&[leaf])
        } else {
            self.simulate(&kept)
        }
    }

    /// Scores the candidates, applies the gate, attaches the survivors and
    /// returns their node ids.
    fn expand(&mut self, parent: usize, candidates: Vec<WorkflowProgram>) -> Result<Vec<usize>, SearchError> {
        self.tree.nodes[parent].expanded = true;
        if candidates.is_empty() {
            self.tree.nodes[parent].terminal = true;
            return Ok(Vec::new());
        }
        let scored: Vec<Result<Scored, SearchError>> = self.cfg.parallelism.map(&candidates, |_, c| self.score(c.clone()));
        let scored: Vec<Scored> = scored.into_iter().collect::<Result<_, _>>()?;
        let tau = self.cfg.engine.tau(self.tree.nodes[parent].depth);

        let gate = self.cfg.stages.expansion;
        let mut keep: Vec<bool> = scored.iter().map(|s| !gate || s.compliance >= tau).collect();
        let mut fallback = None;
        if !keep.iter().any(|k| *k) {
            let mut best = 0;
            for (i, s) in scored.iter().enumerate() {
                if s.compliance > scored[best].compliance {
                    best = i;
                }
            }
            keep[best] = true;
            fallback = Some(best);
        }

        let mut kept = Vec::new();
        for (i, s) in scored.into_iter().enumerate() {
            let mut rec = LogRecord::new(self.round, if keep[i] { Event::Expanded } else { Event::Pruned });
            rec.parent = Some(parent);
            rec.candidate = Some(i);
            rec.c_vector = Some(s.scores.to_array());
            rec.c_total = Some(s.compliance);
            rec.tau = Some(tau);
            if keep[i] {
                let id = self.tree.add_child(parent, s.program, s.state, s.scores, s.compliance);
                rec.node_id = Some(id);
                rec.fallback = Some(fallback == Some(i));
                kept.push(id);
            } else {
                rec.failing = Some(s.scores.failing(tau).iter().map(|f| f.name().to_string()).collect());
            }
            self.log.push(rec);
        }
        Ok(kept)
    }

    /// Evaluates the nodes (concurrently when enabled), then folds results
    /// back in index order.
    fn simulate(&mut self, ids: &[usize]) -> Result<(), SearchError> {
        let tree = &self.tree;
        let evaluator = self.evaluator;
        let problems = self.problems;
        let results: Vec<Result<Evaluation, HarnessError>> = self
            .cfg
            .parallelism
            .map(ids, |_, &id| evaluator.evaluate(&tree.nodes[id].program, problems));
        for (&id, result) in ids.iter().zip(results) {
            let (reward, traces, usage, error) = match result {
                Ok(ev) => (ev.reward.clamp(0.0, 1.0), ev.traces, ev.usage, None),
                Err(e @ HarnessError::Transport(_)) => return Err(e.into()),
                Err(e) => (0.0, Vec::new(), Usage::default(), Some(e.to_string())),
            };
            let engine = &self.cfg.engine;
            let node = &self.tree.nodes[id];
            let scores = engine.with_traces(&node.static_scores, &traces, !self.cfg.stages.simulation);
            let compliance = engine.compliance(&scores, &self.weights)?;
            let credit = if self.cfg.stages.backprop {
                reward * compliance
            } else {
                reward
            };
            self.observed.push((
                self.cfg.category.clone(),
                node.state.histogram_vector(&engine.registry),
            ));

            let node = &mut self.tree.nodes[id];
            node.scores = scores;
            node.compliance = compliance;
            node.own_simulations += 1;
            node.reward_sum += reward;
            self.tree.backpropagate(id, credit);
            self.buffer.push(scores, reward);
            self.simulations += 1;

            let mut rec = LogRecord::new(self.round, Event::Simulated);
            rec.node_id = Some(id);
            rec.c_vector = Some(scores.to_array());
            rec.c_total = Some(compliance);
            rec.reward = Some(reward);
            rec.credit = Some(credit);
            rec.role = Some(Role::Executor);
            rec.tokens_in = usage.prompt_tokens;
            rec.tokens_out = usage.completion_tokens;
            rec.request_id = Some(self.next_request(Role::Executor));
            rec.error = error;
            self.log.push(rec);
        }
        Ok(())
    }

    fn end_round(&mut self) -> Result<(), SearchError> {
        if self.cfg.adaptive_weights {
            let u = adapt(&self.weights, &self.buffer, &self.cfg.adaptation, self.round);
            if u.applied {
                self.weights = u.weights;
                let mut rec = LogRecord::new(self.round, Event::WeightsUpdated);
                rec.weights = Some(u.weights.as_array());
                rec.correlations = Some(u.correlations);
                self.log.push(rec);
            }
        }
        let period = self.library.settings.refinement_period.max(1);
        let observed = std::mem::take(&mut self.observed);
        if (self.round + 1).is_multiple_of(period) && !self.library.frozen && !observed.is_empty() {
            self.library = self.library.refine(&observed, self.round, self.cfg.budget.seed)?;
            let mut rec = LogRecord::new(self.round, Event::Refined);
            rec.motifs = Some(self.library.len());
            self.log.push(rec);
        }
        Ok(())
    }
}
