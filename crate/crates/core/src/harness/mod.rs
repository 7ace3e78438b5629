//! Experiment harness: configuration, CSV ingestion, orchestration, metrics
//! and result files.
//!
//! An experiment runs each trial with seed `seed + trial`, fanning trials
//! out through [`crate::par`], and writes:
//!
//! - `summary.json`: per-trial coverage and size plus per-method aggregates;
//! - `rolling.csv`: trailing-window coverage and size per step;
//! - `regions.csv`: one row per method and step.
//!
//! Output depends only on the configuration, never on the thread count.

pub mod config;
pub mod ingest;
pub mod metrics;
pub mod output;
pub mod runner;

use std::path::PathBuf;

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::datagen::DatagenError;
use crate::forecast::ForecastError;
use crate::spci::SpciError;

pub use config::{DataSource, EngineSettings, ExperimentConfig, Method};
pub use ingest::{ingest_csv, write_csv};
pub use metrics::{evaluate, Evaluation, RollingPoint, SummaryRecord};
pub use output::{format_g, summarize_regions, SummaryFile, TrialRecord};
pub use runner::{run_experiment, run_experiment_with, run_trials, ExperimentOutcome, TrialResult};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("non-numeric value in data row {row}, column `{column}`")]
    NonNumericCell { row: usize, column: String },
    #[error("no rows left after dropping missing values")]
    EmptyAfterDrop,
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Spci(#[from] SpciError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("no reports to evaluate")]
    EmptyReports,
    #[error("step {step}: covariance collapsed, no ellipsoid to build a hull from")]
    DegenerateRegion { step: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed result file: {0}")]
    Malformed(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => EXIT_CONFIG,
            HarnessError::Ingest(_) | HarnessError::Datagen(_) | HarnessError::Io { .. } | HarnessError::Malformed(_) => {
                EXIT_DATA
            }
            HarnessError::Spci(e) => match e {
                SpciError::InvalidConfig(_) => EXIT_CONFIG,
                SpciError::NotWarm { .. }
                | SpciError::SeriesTooShort { .. }
                | SpciError::Forecast(ForecastError::SeriesTooShort { .. }) => EXIT_DATA,
                _ => EXIT_NUMERICAL,
            },
            HarnessError::Baseline(BaselineError::TooFewResiduals { .. }) => EXIT_DATA,
            HarnessError::Baseline(BaselineError::InvalidConfig(_)) => EXIT_CONFIG,
            HarnessError::Baseline(_) | HarnessError::EmptyReports | HarnessError::DegenerateRegion { .. } => {
                EXIT_NUMERICAL
            }
        }
    }
}
