//! Two-step multi-fidelity training.
//!
//! A low-fidelity source (closed form, numerical solver or a frozen trained
//! network) is evaluated on each sample's low-fidelity input and transferred to
//! the high-fidelity grid. The high-fidelity network sees the channels
//! `[a, coordinates, lf]` and learns the residual `u_H - lf`, where `lf` is
//! the first low-fidelity solution when a problem has several. Predictions add
//! the transferred low-fidelity solution back.

mod linear;
mod train;

pub use linear::{fit_linear_ar, LinearArModel};
pub use train::{train_wno, LossKind, Normalizer, TrainConfig, TrainOutcome, TrainedWno};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::{interpolate, lf_solution, Dataset, Fidelity, GridFunction, ProblemError, ProblemSpec, Sample};
use crate::tensor::TensorError;
use crate::wno::{WnoConfig, WnoError};

#[derive(Debug, Error)]
pub enum MfError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged in epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("sample {index} has no low-fidelity input")]
    MissingLfInput { index: usize },
    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<MfError>,
    },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Wno(#[from] WnoError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = MfError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LfSourceKind {
    Analytic,
    Solver,
    Wno,
}

impl fmt::Display for LfSourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LfSourceKind::Analytic => "analytic",
            LfSourceKind::Solver => "solver",
            LfSourceKind::Wno => "wno",
        })
    }
}

impl FromStr for LfSourceKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "analytic" => Ok(LfSourceKind::Analytic),
            "solver" => Ok(LfSourceKind::Solver),
            "wno" => Ok(LfSourceKind::Wno),
            _ => Err(format!("unknown low-fidelity source `{s}`")),
        }
    }
}

/// Where low-fidelity solutions come from. Queries never mutate the source.
#[derive(Clone, Debug)]
pub enum LfSource {
    /// Closed-form low-fidelity models of a benchmark.
    Analytic(ProblemSpec),
    /// The problem's coarse numerical solver.
    Solver(ProblemSpec),
    /// A trained network on the low-fidelity grid, fed `[a, coordinates]`.
    Wno(Arc<TrainedWno>),
}

impl LfSource {
    /// The problem's own low-fidelity model: closed form for benchmarks and
    /// the coarse solver otherwise.
    pub fn native(spec: &ProblemSpec) -> Self {
        if spec.problem.benchmark().is_some() {
            LfSource::Analytic(spec.clone())
        } else {
            LfSource::Solver(spec.clone())
        }
    }

    pub fn kind(&self) -> LfSourceKind {
        match self {
            LfSource::Analytic(_) => LfSourceKind::Analytic,
            LfSource::Solver(_) => LfSourceKind::Solver,
            LfSource::Wno(_) => LfSourceKind::Wno,
        }
    }

    /// Low-fidelity solution(s) on the grid of `lf_input`.
    pub fn query(&self, lf_input: &GridFunction) -> Result<GridFunction> {
        match self {
            LfSource::Analytic(spec) | LfSource::Solver(spec) => Ok(lf_solution(spec, lf_input)?),
            LfSource::Wno(net) => net.predict_one(&plain_input(lf_input)?),
        }
    }

    /// Queries the source and transfers the result onto `target`'s grid.
    pub fn query_on(&self, lf_input: &GridFunction, target: &GridFunction) -> Result<GridFunction> {
        Ok(interpolate(&self.query(lf_input)?, &target.grid)?)
    }
}

fn coordinates(f: &GridFunction) -> Result<GridFunction> {
    Ok(GridFunction::new(f.grid.clone(), f.grid.dim(), f.grid.coordinate_channels())?)
}

/// `[a, coordinates]`, the input of a network without low-fidelity data.
pub fn plain_input(a: &GridFunction) -> Result<GridFunction> {
    Ok(GridFunction::concat(&[a, &coordinates(a)?])?)
}

/// `[a, coordinates, lf]` on the high-fidelity grid.
pub fn build_augmented_input(a: &GridFunction, lf_on_hf: &GridFunction) -> Result<GridFunction> {
    if a.grid != lf_on_hf.grid {
        return Err(MfError::Grid(format!(
            "input lives on {:?}, low-fidelity solution on {:?}",
            a.grid.extents(),
            lf_on_hf.grid.extents()
        )));
    }
    Ok(GridFunction::concat(&[a, &coordinates(a)?, lf_on_hf])?)
}

/// The low-fidelity channels a residual is taken against: the first
/// `channels` of them.
fn lf_reference(lf_on_hf: &GridFunction, channels: usize) -> Result<GridFunction> {
    if lf_on_hf.channels < channels {
        return Err(MfError::Grid(format!(
            "{} low-fidelity channel(s) for a {channels}-channel output",
            lf_on_hf.channels
        )));
    }
    let n = lf_on_hf.points();
    Ok(GridFunction::new(lf_on_hf.grid.clone(), channels, lf_on_hf.values[..channels * n].to_vec())?)
}

fn tag<T>(index: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| MfError::Sample {
        index,
        source: Box::new(e),
    })
}

fn lf_input(index: usize, s: &Sample) -> Result<&GridFunction> {
    s.lf_input.as_ref().ok_or(MfError::MissingLfInput { index })
}

/// Augmented inputs paired with residual targets `u_H - lf`.
pub fn residual_targets(hf: &Dataset, lf: &LfSource) -> Result<Dataset> {
    let samples = hf
        .samples
        .iter()
        .enumerate()
        .map(|(j, s)| {
            tag(j, (|| {
                let lfh = lf.query_on(lf_input(j, s)?, &s.input)?;
                let reference = lf_reference(&lfh, s.output.channels)?;
                Ok(Sample {
                    input: build_augmented_input(&s.input, &lfh)?,
                    output: s.output.zip_with(&reference, |h, l| h - l)?,
                    lf_input: None,
                })
            })())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        fidelity: Fidelity::High,
        samples,
    })
}

/// `[a, coordinates]` inputs paired with the raw outputs.
pub fn plain_targets(data: &Dataset) -> Result<Dataset> {
    let samples = data
        .samples
        .iter()
        .enumerate()
        .map(|(j, s)| {
            Ok(Sample {
                input: tag(j, plain_input(&s.input))?,
                output: s.output.clone(),
                lf_input: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        fidelity: data.fidelity,
        samples,
    })
}

/// `base` with channel counts and spatial rank taken from `data`.
pub fn fit_config(base: &WnoConfig, data: &Dataset) -> Result<WnoConfig> {
    let s = data.samples.first().ok_or(MfError::EmptyDataset)?;
    Ok(WnoConfig {
        spatial_dim: s.input.grid.dim(),
        in_channels: s.input.channels,
        out_channels: s.output.channels,
        ..base.clone()
    })
}

/// Residual network plus the low-fidelity source it was trained against.
#[derive(Clone, Debug)]
pub struct MfSurrogate {
    pub lf: LfSource,
    pub net: TrainedWno,
}

impl MfSurrogate {
    /// The transferred low-fidelity reference and the network's residual.
    pub fn predict_parts(&self, a: &GridFunction, lf_in: &GridFunction) -> Result<(GridFunction, GridFunction)> {
        let lfh = self.lf.query_on(lf_in, a)?;
        let residual = self.net.predict_one(&build_augmented_input(a, &lfh)?)?;
        Ok((lf_reference(&lfh, residual.channels)?, residual))
    }

    pub fn predict(&self, a: &GridFunction, lf_in: &GridFunction) -> Result<GridFunction> {
        let (lf, residual) = self.predict_parts(a, lf_in)?;
        Ok(lf.zip_with(&residual, |l, r| l + r)?)
    }
}

pub fn mf_predict(surrogate: &MfSurrogate, a: &GridFunction, lf_in: &GridFunction) -> Result<GridFunction> {
    surrogate.predict(a, lf_in)
}

/// A trained surrogate of either kind.
#[derive(Clone, Debug)]
pub enum Surrogate {
    Mf(MfSurrogate),
    /// Ablation without the low-fidelity channel or residual learning.
    HfOnly(TrainedWno),
}

impl Surrogate {
    /// Predictions for every sample of `data`.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<GridFunction>> {
        match self {
            Surrogate::Mf(s) => {
                let mut refs = Vec::with_capacity(data.len());
                let mut inputs = Vec::with_capacity(data.len());
                for (j, x) in data.samples.iter().enumerate() {
                    let lfh = tag(j, s.lf.query_on(lf_input(j, x)?, &x.input))?;
                    refs.push(lf_reference(&lfh, s.net.params.config.out_channels)?);
                    inputs.push(build_augmented_input(&x.input, &lfh)?);
                }
                let residuals = s.net.predict(&inputs)?;
                refs.iter()
                    .zip(&residuals)
                    .map(|(l, r)| Ok(l.zip_with(r, |a, b| a + b)?))
                    .collect()
            }
            Surrogate::HfOnly(net) => net.predict(&plain_targets(data)?.samples.into_iter().map(|s| s.input).collect::<Vec<_>>()),
        }
    }
}

/// Step two of the pipeline: trains the residual network against a frozen
/// low-fidelity source.
pub fn train_mf(hf: &Dataset, lf: LfSource, base: &WnoConfig, train: &TrainConfig) -> Result<(MfSurrogate, TrainOutcome)> {
    let data = residual_targets(hf, &lf)?;
    let outcome = train_wno(&data, &fit_config(base, &data)?, train)?;
    Ok((
        MfSurrogate {
            lf,
            net: outcome.model.clone(),
        },
        outcome,
    ))
}

/// Plain network on `[a, coordinates]` with raw targets.
pub fn train_hf_only(hf: &Dataset, base: &WnoConfig, train: &TrainConfig) -> Result<TrainOutcome> {
    let data = plain_targets(hf)?;
    train_wno(&data, &fit_config(base, &data)?, train)
}

/// Step one when no cheap solver is used at prediction time: a network
/// trained on low-fidelity pairs, wrapped as a frozen source.
pub fn train_lf_wno(lf_data: &Dataset, base: &WnoConfig, train: &TrainConfig) -> Result<(LfSource, TrainOutcome)> {
    let outcome = train_hf_only(lf_data, base, train)?;
    Ok((LfSource::Wno(Arc::new(outcome.model.clone())), outcome))
}

/// `(lf_on_hf, u_H)` pairs for the linear autoregressive baseline.
pub fn linear_ar_pairs(hf: &Dataset, lf: &LfSource) -> Result<Vec<(GridFunction, GridFunction)>> {
    hf.samples
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let lfh = tag(j, lf.query_on(lf_input(j, s)?, &s.input))?;
            Ok((lf_reference(&lfh, s.output.channels)?, s.output.clone()))
        })
        .collect()
}

#[cfg(test)]
mod tests;
