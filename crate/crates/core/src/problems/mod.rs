//! Dataset generators: closed-form benchmarks, Gaussian random fields and the
//! Poisson, steady heat and Allen–Cahn solvers.
//!
//! Every generator is a pure function of its spec and seed. Sample `j` of a
//! dataset uses seed `base_seed + j`.

pub mod allen_cahn;
pub mod benchmarks;
mod dataset;
mod fft;
pub mod grf;
pub mod grid;
pub mod heat;
pub mod poisson;

pub use allen_cahn::{rollout_allen_cahn, step_allen_cahn, AllenCahnSpec};
pub use benchmarks::{BenchFidelity, Benchmark};
pub use dataset::{lf_solution, make_dataset, make_lf_dataset, Dataset, Fidelity, ProblemId, ProblemSpec, Sample};
pub use grf::GaussianField;
pub use grid::{interpolate, Axis, Grid, GridFunction, Placement};
pub use heat::solve_heat_fv;
pub use poisson::solve_poisson_fd;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("unknown fidelity: {0}")]
    Fidelity(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("covariance is not positive definite even with jitter {jitter:e}")]
    Cholesky { jitter: f64 },
    #[error("solution blew up at step {step} (max |u| = {max:e})")]
    BlowUp { step: usize, max: f64 },
    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<ProblemError>,
    },
}

pub type Result<T, E = ProblemError> = std::result::Result<T, E>;
