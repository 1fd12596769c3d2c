//! Run orchestration: configuration, end-to-end runs with on-disk
//! artifacts, and reports computed from run logs.

mod config;
mod execute;
mod report;

use std::path::PathBuf;

use crate::adaptive::AdaptError;
use crate::constraints::ConstraintError;
use crate::harness::HarnessError;
use crate::mcts::{LogParseError, SearchError};
use crate::motif::MotifError;
use crate::workflow::WorkflowError;

pub use config::{ablation_grid, AblationCell, ExecutorMode, RunConfig, SuiteConfig, WeightsMode};
pub use execute::{
    execute, export_workflow, load_workflow, prepare, write_artifacts, Prepared, RunArtifacts, RunSummary,
    ARTIFACT_FILES,
};
pub use report::{audit, mean_std, render_table, report_log, variance_ratio, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    LogParse {
        path: PathBuf,
        #[source]
        source: LogParseError,
    },
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Motif(#[from] MotifError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

impl RunError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
