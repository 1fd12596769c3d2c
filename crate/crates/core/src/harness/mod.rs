//! The two pluggable roles the search needs: an edit proposer and an
//! evaluator. Both have a deterministic synthetic implementation and an
//! adapter that forwards requests to an external process over
//! newline-delimited JSON (standard streams or HTTP).

mod external;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::workflow::{ExecutionTrace, NodeId, WorkflowError, WorkflowProgram};

pub use external::{handle, serve_http, serve_lines, EvaluateParams, ExternalAdapter, ProposeParams, Request, RequestKind, Response};
pub use synthetic::{
    make_synthetic_suite, program_hash, SuiteSpec, SyntheticEvaluator, SyntheticProposer, SyntheticSuite, Tolerance,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Optimizer,
    Executor,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Optimizer => "optimizer",
            Role::Executor => "executor",
        })
    }
}

/// Token counts reported by one proposer or evaluator call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// One logged request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub role: Role,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub request_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    /// Value of each `input` root, keyed by node id.
    pub inputs: BTreeMap<NodeId, f64>,
    pub expected: f64,
    pub category: String,
    /// Additional literal values stated by the problem. They join the
    /// program's roots in V_in when the magnitude bound is computed.
    #[serde(default)]
    pub constants: Vec<f64>,
    #[serde(default)]
    pub split: Split,
}

/// Problems tagged with their split. `split_ratio` is validation:test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSet {
    pub problems: Vec<Problem>,
    #[serde(default = "default_split_ratio")]
    pub split_ratio: [u32; 2],
}

fn default_split_ratio() -> [u32; 2] {
    [1, 4]
}

impl ProblemSet {
    /// Tags the first `n * a / (a + b)` problems as validation and the rest
    /// as test.
    pub fn split(mut problems: Vec<Problem>, ratio: [u32; 2]) -> Result<Self, HarnessError> {
        let [a, b] = ratio;
        if a + b == 0 {
            return Err(HarnessError::Config("split ratio 0:0".into()));
        }
        let n_val = problems.len() * a as usize / (a + b) as usize;
        for (i, p) in problems.iter_mut().enumerate() {
            p.split = if i < n_val { Split::Validation } else { Split::Test };
        }
        Ok(Self {
            problems,
            split_ratio: ratio,
        })
    }

    pub fn validation(&self) -> Vec<Problem> {
        self.of(Split::Validation)
    }

    pub fn test(&self) -> Vec<Problem> {
        self.of(Split::Test)
    }

    fn of(&self, s: Split) -> Vec<Problem> {
        self.problems.iter().filter(|p| p.split == s).cloned().collect()
    }

    /// Categories in first-appearance order.
    pub fn categories(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.problems {
            if !out.contains(&p.category) {
                out.push(p.category.clone());
            }
        }
        out
    }

    /// Most frequent validation category; ties go to the first seen.
    pub fn primary_category(&self) -> Option<String> {
        let val = self.validation();
        let mut counts: Vec<(String, usize)> = Vec::new();
        for p in &val {
            match counts.iter_mut().find(|(c, _)| *c == p.category) {
                Some((_, n)) => *n += 1,
                None => counts.push((p.category.clone(), 1)),
            }
        }
        let mut best: Option<(String, usize)> = None;
        for (c, n) in counts {
            if best.as_ref().is_none_or(|(_, b)| n > *b) {
                best = Some((c, n));
            }
        }
        best.map(|(c, _)| c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Protocol(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub candidates: Vec<WorkflowProgram>,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Fraction of problems answered correctly.
    pub reward: f64,
    pub traces: Vec<ExecutionTrace>,
    pub usage: Usage,
}

/// Generates candidate edits of a program.
pub trait Proposer: Send + Sync {
    /// At most `count` structurally valid candidates. Equal `(program, seed)`
    /// pairs must give equal lists.
    fn propose(&self, program: &WorkflowProgram, count: usize, seed: u64) -> Result<Proposal, HarnessError>;
}

/// Scores a program on a batch of problems. Implementations must be pure.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, program: &WorkflowProgram, problems: &[Problem]) -> Result<Evaluation, HarnessError>;
}

/// Per-role token prices.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolePrice {
    pub input: f64,
    pub output: f64,
}

pub type PriceMap = BTreeMap<Role, RolePrice>;

/// Sum of prompt and completion tokens over all records, divided by
/// `n_problems`.
pub fn tokens_per_problem(records: &[TokenRecord], n_problems: usize) -> Result<f64, HarnessError> {
    if n_problems == 0 {
        return Err(HarnessError::Config("n_problems must be at least 1".into()));
    }
    let total: u64 = records.iter().map(|r| r.prompt_tokens + r.completion_tokens).sum();
    Ok(total as f64 / n_problems as f64)
}

/// Priced token usage averaged per problem. Both roles must have a price.
pub fn cost(records: &[TokenRecord], prices: &PriceMap, n_problems: usize) -> Result<f64, HarnessError> {
    if n_problems == 0 {
        return Err(HarnessError::Config("n_problems must be at least 1".into()));
    }
    for role in [Role::Optimizer, Role::Executor] {
        let p = prices
            .get(&role)
            .ok_or_else(|| HarnessError::Config(format!("no price for role {role}")))?;
        if !(p.input >= 0.0 && p.output >= 0.0) {
            return Err(HarnessError::Config(format!("negative price for role {role}")));
        }
    }
    let total: f64 = records
        .iter()
        .map(|r| {
            let p = prices[&r.role];
            r.prompt_tokens as f64 * p.input + r.completion_tokens as f64 * p.output
        })
        .sum();
    Ok(total / n_problems as f64)
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("empty problem batch")]
    EmptyBatch,
    #[error("suite generation failed after {0} attempts")]
    Degenerate(usize),
    #[error("configuration: {0}")]
    Config(String),
    #[error("adapter transport: {0}")]
    Transport(String),
    #[error("adapter protocol: {0}")]
    Protocol(String),
    #[error("remote error: {0}")]
    Remote(String),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(role: Role, p: u64, c: u64) -> TokenRecord {
        TokenRecord {
            role,
            prompt_tokens: p,
            completion_tokens: c,
            request_id: String::new(),
        }
    }

    #[test]
    fn tokens_per_problem_examples() {
        assert_eq!(tokens_per_problem(&[], 3).unwrap(), 0.0);
        let log = [rec(Role::Optimizer, 100, 50), rec(Role::Executor, 200, 150)];
        assert_eq!(tokens_per_problem(&log, 5).unwrap(), 100.0);
        assert!(tokens_per_problem(&log, 0).is_err());
    }

    #[test]
    fn cost_examples() {
        let mut prices = PriceMap::new();
        prices.insert(Role::Optimizer, RolePrice { input: 1e-6, output: 2e-6 });
        prices.insert(Role::Executor, RolePrice { input: 1e-6, output: 2e-6 });
        let log = [rec(Role::Executor, 1000, 500)];
        assert!((cost(&log, &prices, 1).unwrap() - 0.002).abs() < 1e-15);
        prices.remove(&Role::Optimizer);
        assert!(cost(&log, &prices, 1).is_err());
    }

    #[test]
    fn split_one_to_four() {
        let p = Problem {
            inputs: BTreeMap::new(),
            expected: 0.0,
            category: "a".into(),
            constants: vec![],
            split: Split::Validation,
        };
        let set = ProblemSet::split(vec![p; 10], [1, 4]).unwrap();
        assert_eq!(set.validation().len(), 2);
        assert_eq!(set.test().len(), 8);
        let back = ProblemSet::from_json(&set.to_json()).unwrap();
        assert_eq!(back, set);
    }
}
