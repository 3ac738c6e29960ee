//! Experiment orchestration for the drrs command line: config loading,
//! parallel macro-replications, the experiment suites, bound verification
//! and CSV/SVG output.

pub mod config;
pub mod experiment;
pub mod output;
pub mod suites;
pub mod svg;
pub mod verify;

use std::path::PathBuf;

use drrs_core::analysis::AnalysisError;
use drrs_core::procedures::ProcedureError;
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, Overrides, PreparedInstance, Procedure};
pub use experiment::{run_experiment, CellResult, EstimateRow, Runner};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Procedure(#[from] ProcedureError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}
