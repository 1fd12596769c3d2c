use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::harness::{
    Evaluator, ExternalAdapter, Problem, ProblemSet, Proposer, SyntheticEvaluator, SyntheticProposer, Usage,
};
use crate::mcts::{run_optimization, SearchOutcome};
use crate::motif::{init_templates, init_templates_best_effort, MotifError, MotifLibrary};
use crate::workflow::{validate_program, OperatorRegistry, WorkflowError, WorkflowProgram};

use super::report::{report_log, RunReport};
use super::{ExecutorMode, RunConfig, RunError};

/// Files written by [`write_artifacts`], in write order.
pub const ARTIFACT_FILES: [&str; 4] = ["runlog.ndjson", "library.json", "best_workflow.json", "summary.json"];

/// Inputs of a run, resolved from the configuration.
pub struct Prepared {
    pub registry: OperatorRegistry,
    pub initial: WorkflowProgram,
    pub problems: ProblemSet,
    pub category: String,
    /// Hidden per-category targets when the suite was generated here.
    pub targets: Vec<(String, WorkflowProgram)>,
    pub library: MotifLibrary,
    pub proposer: Box<dyn Proposer>,
    pub evaluator: Box<dyn Evaluator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub executor: String,
    pub category: String,
    pub simulations: usize,
    pub tree_size: usize,
    pub best_validation_reward: Option<f64>,
    pub best_compliance: f64,
    /// Accuracy of the best program on the held-out test split.
    pub test_accuracy: Option<f64>,
    pub test_tokens: u64,
    pub validation_problems: usize,
    pub test_problems: usize,
    pub library_size: usize,
    pub final_weights: [f64; 6],
    pub weight_trajectory: Vec<[f64; 6]>,
    pub report: RunReport,
}

pub struct RunArtifacts {
    pub config: RunConfig,
    pub outcome: SearchOutcome,
    pub summary: RunSummary,
    pub targets: Vec<(String, WorkflowProgram)>,
}

fn read(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| RunError::io(path, e))
}

fn build_library(cfg: &RunConfig, registry: &OperatorRegistry, categories: &[String]) -> Result<MotifLibrary, RunError> {
    let seed = cfg.budget.seed;
    let mut lib = match init_templates(registry, categories, cfg.library, seed) {
        Ok(lib) => lib,
        // small registries cannot fit the full quota at the required spread
        Err(MotifError::Infeasible { .. }) => init_templates_best_effort(registry, categories, cfg.library, seed)?,
        Err(e) => return Err(e.into()),
    };
    if cfg.freeze_library {
        lib.freeze();
    }
    Ok(lib)
}

/// Resolves problems, initial program, motif library and backends.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared, RunError> {
    cfg.validate()?;
    let registry = cfg.registry()?;
    let seed = cfg.budget.seed;
    let need_suite = cfg.problems_file.is_none() || cfg.initial_program_file.is_none();
    let suite = if need_suite {
        Some(cfg.suite.spec().generate(seed, cfg.suite.n_problems, cfg.suite.categories)?)
    } else {
        None
    };

    let problems = match (&cfg.problems_file, &suite) {
        (Some(path), _) => ProblemSet::from_json(&read(path)?)?,
        (None, Some(s)) => s.problems.clone(),
        (None, None) => unreachable!("suite generated when no problem file is given"),
    };
    let initial = match (&cfg.initial_program_file, &suite) {
        (Some(path), _) => load_workflow(path, &registry)?,
        (None, Some(s)) => s.initial.clone(),
        (None, None) => unreachable!("suite generated when no initial program is given"),
    };
    let category = problems
        .primary_category()
        .ok_or_else(|| RunError::Config("problem set has no validation problems".into()))?;
    let library = build_library(cfg, &registry, &problems.categories())?;

    let (proposer, evaluator): (Box<dyn Proposer>, Box<dyn Evaluator>) = match &cfg.executor {
        ExecutorMode::Synthetic => {
            let mut p = SyntheticProposer::new(registry.clone(), cfg.suite.max_ops);
            p.distractors = cfg.suite.distractors;
            let e = SyntheticEvaluator {
                registry: registry.clone(),
                tolerance: cfg.tolerance,
            };
            (Box::new(p), Box::new(e))
        }
        ExecutorMode::External(addr) => (
            Box::new(ExternalAdapter::connect(addr)?),
            Box::new(ExternalAdapter::connect(addr)?),
        ),
    };
    Ok(Prepared {
        registry,
        initial,
        problems,
        category,
        targets: suite.map(|s| s.targets).unwrap_or_default(),
        library,
        proposer,
        evaluator,
    })
}

/// Runs the search on the validation split and scores the winner on the
/// test split.
pub fn execute(cfg: &RunConfig) -> Result<RunArtifacts, RunError> {
    let p = prepare(cfg)?;
    let validation = p.problems.validation();
    let test: Vec<Problem> = p.problems.test();
    let search = cfg.search_config(&p.category)?;
    let outcome = run_optimization(
        &p.initial,
        p.proposer.as_ref(),
        p.evaluator.as_ref(),
        &validation,
        p.library.clone(),
        &search,
    )?;

    let (test_accuracy, test_usage) = if test.is_empty() {
        (None, Usage::default())
    } else {
        let ev = p.evaluator.evaluate(&outcome.best, &test)?;
        (Some(ev.reward), ev.usage)
    };
    let report = report_log("run", &outcome.log, validation.len(), &cfg.prices)?;
    let best_compliance = outcome
        .best_node
        .map_or(outcome.tree.root().compliance, |id| outcome.tree.nodes[id].compliance);
    let summary = RunSummary {
        seed: cfg.budget.seed,
        executor: cfg.executor.to_string(),
        category: p.category.clone(),
        simulations: outcome.simulations,
        tree_size: outcome.tree.len(),
        best_validation_reward: outcome.best_reward,
        best_compliance,
        test_accuracy,
        test_tokens: test_usage.total(),
        validation_problems: validation.len(),
        test_problems: test.len(),
        library_size: outcome.library.len(),
        final_weights: outcome
            .weight_trajectory
            .last()
            .copied()
            .unwrap_or(search.initial_weights)
            .as_array(),
        weight_trajectory: outcome.weight_trajectory.iter().map(|w| w.as_array()).collect(),
        report,
    };
    Ok(RunArtifacts {
        config: cfg.clone(),
        outcome,
        summary,
        targets: p.targets,
    })
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|e| RunError::io(path, e))
}

/// Writes the run log, final motif library, best program and summary into
/// `dir`, creating it if needed.
pub fn write_artifacts(dir: &Path, art: &RunArtifacts) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    write(&dir.join(ARTIFACT_FILES[0]), &art.outcome.log.to_ndjson())?;
    write(&dir.join(ARTIFACT_FILES[1]), &art.outcome.library.to_json())?;
    export_workflow(&art.outcome.best, &art.config.registry()?, &dir.join(ARTIFACT_FILES[2]))?;
    let mut summary = serde_json::to_string_pretty(&art.summary).expect("summary serializes");
    summary.push('\n');
    write(&dir.join(ARTIFACT_FILES[3]), &summary)
}

/// Writes `program` in the workflow JSON format. Invalid programs are
/// rejected before anything touches the disk.
pub fn export_workflow(program: &WorkflowProgram, registry: &OperatorRegistry, path: &Path) -> Result<(), RunError> {
    let report = validate_program(program, registry);
    if !report.is_ok() {
        return Err(WorkflowError::Invalid(report.messages()).into());
    }
    let mut text = program.to_json();
    text.push('\n');
    write(path, &text)
}

/// Reads and validates a workflow file.
pub fn load_workflow(path: &Path, registry: &OperatorRegistry) -> Result<WorkflowProgram, RunError> {
    let program = WorkflowProgram::from_json(&read(path)?)?;
    let report = validate_program(&program, registry);
    if !report.is_ok() {
        return Err(WorkflowError::Invalid(report.messages()).into());
    }
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::{Edge, Node, NodeId};

    fn small() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.budget.rounds = 3;
        cfg.budget.simulations_per_round = 4;
        cfg
    }

    #[test]
    fn run_writes_all_artifacts() {
        let art = execute(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_artifacts(dir.path(), &art).unwrap();
        for f in ARTIFACT_FILES {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let best = load_workflow(&dir.path().join("best_workflow.json"), &art.config.registry().unwrap()).unwrap();
        assert_eq!(best, art.outcome.best);
        assert_eq!(art.summary.validation_problems + art.summary.test_problems, 20);
    }

    #[test]
    fn invalid_program_not_written() {
        let mut p = WorkflowProgram {
            nodes: vec![Node::input(0), Node::op(1, "add")],
            edges: vec![Edge::new(0, 1, 0)],
            roots: vec![NodeId(0)],
            output: NodeId(1),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        assert!(export_workflow(&p, &OperatorRegistry::baseline(), &path).is_err());
        assert!(!path.exists());
        p.edges.push(Edge::new(0, 1, 1));
        export_workflow(&p, &OperatorRegistry::baseline(), &path).unwrap();
    }

    #[test]
    fn unreachable_external_executor_fails() {
        let mut cfg = small();
        cfg.executor = ExecutorMode::External("http://127.0.0.1:9/".into());
        assert!(execute(&cfg).is_err());
    }
}
