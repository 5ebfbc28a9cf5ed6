//! Experiment orchestration: configuration, data and surrogate persistence,
//! end-to-end runs, reports and the command-line interface.

pub mod cli;
pub mod config;
pub mod container;
mod experiment;
pub mod storage;

pub use config::{Ablation, DataSeeds, ExperimentConfig, CONFIG_VERSION};
pub use container::{load_array, save_array, ContainerError};
pub use experiment::{
    evaluate_run, generate_data, load_data, mse_lf, read_results, report, rollout, rollout_mse, run_experiment,
    save_data, sweep, write_results, Datasets, ExperimentOutcome, ResultsRow, EXTRAS_FILE, FAILED_MARKER,
    REPORT_FILE, RESULTS_FILE, RESULTS_HEADER,
};

use std::io;

use thiserror::Error;

use crate::metrics::MetricsError;
use crate::mf::MfError;
use crate::problems::ProblemError;
use crate::tensor::TensorError;
use crate::wno::WnoError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("cannot parse TOML: {0}")]
    TomlRead(#[from] toml::de::Error),
    #[error("cannot write TOML: {0}")]
    TomlWrite(#[from] toml::ser::Error),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Mf(#[from] MfError),
    #[error(transparent)]
    Wno(#[from] WnoError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
