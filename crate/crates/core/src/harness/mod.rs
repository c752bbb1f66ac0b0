//! Experiment runner: configuration, persistence, grid search and reports.

mod config;
mod data;
mod grid;
mod report;
mod run;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::episodes::EpisodeError;
use crate::meta_policy::MetaError;

pub use config::{ExperimentConfig, TaskSource, FORMAT_VERSION};
pub use data::{group_queries, load_task, DomainInfo, LoadedTask};
pub use grid::{grid_points, grid_search_pexplore, GridRow, GridTable};
pub use report::{report, Cell, ReportRow, ReportTable, REPORT_METRICS};
pub use run::{
    build_meta_sets, combo_seed, resolve_output_dir, run_experiment, run_seed, ExperimentSummary, MetricBlock,
    RunSummary, CONFIDENCE_LEVEL,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration or arguments; exit code 1.
    #[error("validation error: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            _ => 2,
        }
    }
}

/// The identity-scaling, no-exploration variant of `config` used as the
/// plain-training baseline.
pub fn baseline_config(config: &ExperimentConfig) -> ExperimentConfig {
    let mut c = config.clone();
    c.meta_policy.lambda_grid = vec![1.0];
    c.meta_policy.p_explore = 0.0;
    c.label = Some(match &config.label {
        Some(l) => format!("{l} (baseline)"),
        None => "baseline".into(),
    });
    c
}
