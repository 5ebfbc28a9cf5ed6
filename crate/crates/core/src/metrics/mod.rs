//! Evaluation measures over sets of fields.
//!
//! Errors are compared elementwise and averaged over every sample, channel and
//! grid point.

use std::io::{self, Write};

use thiserror::Error;

use crate::problems::GridFunction;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no samples to evaluate")]
    Empty,
    #[error("R² is undefined for a constant reference")]
    ConstantReference,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

fn check_pair(i: usize, p: &GridFunction, r: &GridFunction) -> Result<()> {
    if p.channels != r.channels || p.grid.extents() != r.grid.extents() || p.values.len() != r.values.len() {
        return Err(MetricsError::Shape(format!(
            "sample {i}: prediction has {} channel(s) on {:?}, reference {} on {:?}",
            p.channels,
            p.grid.extents(),
            r.channels,
            r.grid.extents()
        )));
    }
    Ok(())
}

fn check(pred: &[GridFunction], reference: &[GridFunction]) -> Result<()> {
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    if pred.len() != reference.len() {
        return Err(MetricsError::Shape(format!(
            "{} predictions for {} references",
            pred.len(),
            reference.len()
        )));
    }
    for (i, (p, r)) in pred.iter().zip(reference).enumerate() {
        check_pair(i, p, r)?;
    }
    Ok(())
}

fn sq_sum(p: &GridFunction, r: &GridFunction) -> f64 {
    p.values.iter().zip(&r.values).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Mean squared error over all samples and grid points.
pub fn mse(pred: &[GridFunction], reference: &[GridFunction]) -> Result<f64> {
    check(pred, reference)?;
    let n: usize = reference.iter().map(|r| r.values.len()).sum();
    let s: f64 = pred.iter().zip(reference).map(|(p, r)| sq_sum(p, r)).sum();
    Ok(s / n as f64)
}

/// Mean squared error of each sample separately.
pub fn per_sample_mse(pred: &[GridFunction], reference: &[GridFunction]) -> Result<Vec<f64>> {
    check(pred, reference)?;
    Ok(pred
        .iter()
        .zip(reference)
        .map(|(p, r)| sq_sum(p, r) / r.values.len() as f64)
        .collect())
}

/// Coefficient of determination `1 - SS_res / SS_tot`, with the total sum of
/// squares taken about the global mean of the reference.
pub fn r2(pred: &[GridFunction], reference: &[GridFunction]) -> Result<f64> {
    check(pred, reference)?;
    let n: usize = reference.iter().map(|r| r.values.len()).sum();
    let mean = reference.iter().flat_map(|r| &r.values).sum::<f64>() / n as f64;
    let ss_tot: f64 = reference.iter().flat_map(|r| &r.values).map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricsError::ConstantReference);
    }
    let ss_res: f64 = pred.iter().zip(reference).map(|(p, r)| sq_sum(p, r)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Pointwise `|pred - ref|`.
pub fn abs_error_field(pred: &GridFunction, reference: &GridFunction) -> Result<GridFunction> {
    check_pair(0, pred, reference)?;
    pred.zip_with(reference, |a, b| (a - b).abs())
        .map_err(|e| MetricsError::Shape(e.to_string()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mse: f64,
    pub r2: f64,
    pub per_sample: Vec<f64>,
    pub abs_error: Option<Vec<GridFunction>>,
}

impl EvalReport {
    pub fn compute(pred: &[GridFunction], reference: &[GridFunction], keep_abs_error: bool) -> Result<Self> {
        let abs_error = if keep_abs_error {
            Some(
                pred.iter()
                    .zip(reference)
                    .map(|(p, r)| abs_error_field(p, r))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(Self {
            mse: mse(pred, reference)?,
            r2: r2(pred, reference)?,
            per_sample: per_sample_mse(pred, reference)?,
            abs_error,
        })
    }

    /// Per-sample errors as CSV with header `sample,mse`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "sample,mse")?;
        for (i, m) in self.per_sample.iter().enumerate() {
            writeln!(w, "{i},{m:e}")?;
        }
        Ok(())
    }
}
