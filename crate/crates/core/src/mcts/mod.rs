//! Compliance-shaped Monte Carlo Tree Search over workflow programs.
//!
//! Each tree node holds one complete program. An iteration selects a leaf by
//! the shaped UCT score `(Q + c*U) * exp(lambda * C_total)`, expands it
//! through the proposer with a depth-aware compliance gate, simulates the
//! attached children with the evaluator and credits `R * C_total` up the
//! path. Weights adapt once per round; the motif library is refined every
//! few rounds from the histograms observed in that round.

mod log;
mod search;
mod tree;

use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaptError, AdaptationConfig, WeightVector};
use crate::constraints::{ConstraintEngine, ConstraintError};
use crate::harness::HarnessError;
use crate::motif::MotifError;
use crate::parallel::Parallelism;
use crate::workflow::{OperatorRegistry, WorkflowError};

pub use log::{Event, LogParseError, LogRecord, RunLog};
pub use search::{run_optimization, SearchOutcome};
pub use tree::{select, selection_score, SearchNode, SearchTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchBudget {
    pub rounds: usize,
    pub simulations_per_round: usize,
    pub max_candidates_per_expansion: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            rounds: 15,
            simulations_per_round: 8,
            max_candidates_per_expansion: 8,
            seed: 42,
        }
    }
}

impl SearchBudget {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.rounds == 0 || self.simulations_per_round == 0 || self.max_candidates_per_expansion == 0 {
            return Err(SearchError::Config(format!("budget entries must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Selection,
    Expansion,
    Simulation,
    Backprop,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Selection, Stage::Expansion, Stage::Simulation, Stage::Backprop];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Selection => "selection",
            Stage::Expansion => "expansion",
            Stage::Simulation => "simulation",
            Stage::Backprop => "backprop",
        }
    }
}

/// Where compliance enters the loop. Selection off drops the exp factor,
/// expansion off bypasses the gate, simulation off pins the magnitude score
/// to 1, and backprop off credits the raw reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageSwitches {
    pub selection: bool,
    pub expansion: bool,
    pub simulation: bool,
    pub backprop: bool,
}

impl Default for StageSwitches {
    fn default() -> Self {
        Self::all()
    }
}

impl StageSwitches {
    pub fn all() -> Self {
        Self {
            selection: true,
            expansion: true,
            simulation: true,
            backprop: true,
        }
    }

    pub fn none() -> Self {
        Self {
            selection: false,
            expansion: false,
            simulation: false,
            backprop: false,
        }
    }

    pub fn only(s: Stage) -> Self {
        let mut out = Self::none();
        match s {
            Stage::Selection => out.selection = true,
            Stage::Expansion => out.expansion = true,
            Stage::Simulation => out.simulation = true,
            Stage::Backprop => out.backprop = true,
        }
        out
    }

    pub fn any(&self) -> bool {
        self.selection || self.expansion || self.simulation || self.backprop
    }
}

/// Everything the search loop reads besides the proposer, evaluator,
/// problems and motif library.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub engine: ConstraintEngine,
    pub adaptation: AdaptationConfig,
    pub stages: StageSwitches,
    /// When false the weights stay at `initial_weights` for the whole run.
    pub adaptive_weights: bool,
    pub initial_weights: WeightVector,
    pub budget: SearchBudget,
    /// Category whose motifs score the pattern family.
    pub category: String,
    pub parallelism: Parallelism,
}

impl SearchConfig {
    pub fn new(registry: OperatorRegistry, category: impl Into<String>) -> Self {
        Self {
            engine: ConstraintEngine::new(registry),
            adaptation: AdaptationConfig::default(),
            stages: StageSwitches::all(),
            adaptive_weights: true,
            initial_weights: WeightVector::uniform(),
            budget: SearchBudget::default(),
            category: category.into(),
            parallelism: Parallelism::default(),
        }
    }

    /// Plain UCT: no exp factor, no gate, magnitude pinned, raw credit.
    pub fn unshaped(mut self) -> Self {
        self.engine.aggregation.lambda_shaping = 0.0;
        self.stages = StageSwitches::none();
        self
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        self.engine.validate()?;
        self.adaptation.validate()?;
        if self.budget.max_candidates_per_expansion == 0 {
            return Err(SearchError::Config("max_candidates_per_expansion must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error(transparent)]
    Motif(#[from] MotifError),
}
