use super::{MfError, Result};
use crate::problems::GridFunction;

/// Linear autoregressive link `y_H ≈ rho * y_L + delta(x)` with a constant
/// `rho` and a field-valued `delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearArModel {
    pub rho: f64,
    pub delta: GridFunction,
}

impl LinearArModel {
    pub fn predict(&self, y_lf: &GridFunction) -> Result<GridFunction> {
        let scaled = y_lf.map(|v| self.rho * v);
        Ok(scaled.zip_with(&self.delta, |a, b| a + b)?)
    }
}

/// Closed-form least squares over `(y_L, y_H)` pairs on a shared grid.
///
/// For fixed `rho` the optimal `delta` is the pointwise mean of
/// `y_H - rho y_L`; substituting gives `rho` as the ratio of the centred
/// cross and auto sums. When every sample has the same `y_L` the problem is
/// degenerate: `rho` is set to 0 and `delta` to the mean of `y_H`.
pub fn fit_linear_ar(pairs: &[(GridFunction, GridFunction)]) -> Result<LinearArModel> {
    if pairs.len() < 2 {
        return Err(MfError::TooFewSamples { need: 2, got: pairs.len() });
    }
    let (l0, _) = &pairs[0];
    for (i, (l, h)) in pairs.iter().enumerate() {
        if l.grid != l0.grid || h.grid != l0.grid || l.values.len() != l0.values.len() || h.values.len() != l0.values.len()
        {
            return Err(MfError::Grid(format!("pair {i} does not share the grid of pair 0")));
        }
    }
    let m = l0.values.len();
    let n = pairs.len() as f64;
    let mut mean_l = vec![0.0; m];
    let mut mean_h = vec![0.0; m];
    for (l, h) in pairs {
        for p in 0..m {
            mean_l[p] += l.values[p] / n;
            mean_h[p] += h.values[p] / n;
        }
    }
    let (mut cross, mut auto) = (0.0, 0.0);
    for (l, h) in pairs {
        for p in 0..m {
            let dl = l.values[p] - mean_l[p];
            cross += dl * (h.values[p] - mean_h[p]);
            auto += dl * dl;
        }
    }
    let rho = if auto > 0.0 {
        cross / auto
    } else {
        log::warn!("all low-fidelity samples coincide; fitting rho = 0");
        0.0
    };
    let delta: Vec<f64> = (0..m).map(|p| mean_h[p] - rho * mean_l[p]).collect();
    Ok(LinearArModel {
        rho,
        delta: GridFunction::new(l0.grid.clone(), l0.channels, delta)?,
    })
}
