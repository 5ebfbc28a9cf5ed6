use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::fft::Fft2;
use super::grf::{sample_spectral_field, wavenumber};
use super::grid::{interpolate, Axis, Grid, GridFunction};
use super::{ProblemError, Result};

/// Sup-norm beyond which a rollout is declared blown up.
pub const BLOW_UP: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllenCahnSpec {
    pub epsilon: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Steps between emitted snapshots.
    pub subsample: usize,
    /// Side length of the periodic square.
    pub length: f64,
    /// Grid nodes per side, including the duplicated periodic endpoint.
    pub nodes: usize,
    pub tau: f64,
    pub alpha: f64,
}

impl Default for AllenCahnSpec {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            dt: 0.04,
            horizon: 10.0,
            subsample: 5,
            length: 3.0,
            nodes: 65,
            tau: 15.0,
            alpha: 1.0,
        }
    }
}

impl AllenCahnSpec {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn grid(&self) -> Grid {
        periodic_grid(self.nodes, self.length)
    }

    /// Every second node of the full grid.
    pub fn lf_grid(&self) -> Grid {
        periodic_grid(self.nodes / 2 + 1, self.length)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 3 || (self.nodes - 1) % 2 != 0 {
            return Err(ProblemError::Invalid(format!(
                "Allen-Cahn grids need an odd node count >= 3 (periodic endpoint included), got {}",
                self.nodes
            )));
        }
        if !(self.dt > 0.0 && self.epsilon > 0.0 && self.horizon > 0.0) || self.subsample == 0 {
            return Err(ProblemError::Invalid("Allen-Cahn time parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Square node grid on `[0, length]^2`; the last node repeats the first.
pub fn periodic_grid(nodes: usize, length: f64) -> Grid {
    Grid::new(vec![Axis::nodes(0.0, length, nodes), Axis::nodes(0.0, length, nodes)])
}

fn unique(u: &GridFunction) -> Result<(usize, f64, Vec<f64>)> {
    let (ax, ay) = match u.grid.axes.as_slice() {
        [x, y] => (x, y),
        _ => return Err(ProblemError::Shape("Allen-Cahn state must be 2D".into())),
    };
    if ax.n != ay.n || ax.n < 3 || u.channels != 1 || ax.lo != 0.0 || ay.lo != 0.0 || ax.hi != ay.hi {
        return Err(ProblemError::Shape("Allen-Cahn state must be one channel on a square periodic grid".into()));
    }
    let n = ax.n - 1;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.extend_from_slice(&u.values[i * ax.n..i * ax.n + n]);
    }
    Ok((n, ax.hi, out))
}

fn with_endpoint(grid: &Grid, n: usize, v: &[f64]) -> Result<GridFunction> {
    let m = n + 1;
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = v[(i % n) * n + j % n];
        }
    }
    GridFunction::new(grid.clone(), 1, out)
}

/// Forward-Euler stepper with an exact spectral Laplacian.
pub struct Stepper {
    n: usize,
    fft: Fft2,
    symbol: Vec<f64>,
}

impl Stepper {
    /// `n` unique points per side on a periodic square of side `length`.
    pub fn new(n: usize, length: f64) -> Self {
        let c = (2.0 * PI / length).powi(2);
        let mut symbol = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (kx, ky) = (wavenumber(i, n), wavenumber(j, n));
                symbol[i * n + j] = -c * (kx * kx + ky * ky) / (n * n) as f64;
            }
        }
        Self {
            n,
            fft: Fft2::new(n),
            symbol,
        }
    }

    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = u.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.symbol) {
            *b *= s;
        }
        self.fft.inverse(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    /// `u + dt (eps lap u + u - u^3)` in place.
    pub fn step(&self, u: &mut [f64], epsilon: f64, dt: f64) {
        debug_assert_eq!(u.len(), self.n * self.n);
        let lap = self.laplacian(u);
        for (v, l) in u.iter_mut().zip(lap) {
            *v += dt * (epsilon * l + *v - *v * *v * *v);
        }
    }
}

fn check_state(u: &[f64], step: usize) -> Result<()> {
    let max = u.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
    if max > BLOW_UP {
        return Err(ProblemError::BlowUp { step, max });
    }
    Ok(())
}

/// One explicit step on a periodic node grid.
pub fn step_allen_cahn(u: &GridFunction, epsilon: f64, dt: f64) -> Result<GridFunction> {
    let (n, length, mut v) = unique(u)?;
    Stepper::new(n, length).step(&mut v, epsilon, dt);
    check_state(&v, 1)?;
    with_endpoint(&u.grid, n, &v)
}

/// Runs `spec.steps()` steps from `u0` and returns every `spec.subsample`-th state (excluding `u0`).
pub fn rollout_allen_cahn(u0: &GridFunction, spec: &AllenCahnSpec) -> Result<Vec<GridFunction>> {
    spec.validate()?;
    let (n, length, mut v) = unique(u0)?;
    let stepper = Stepper::new(n, length);
    let mut out = Vec::with_capacity(spec.steps() / spec.subsample);
    for s in 1..=spec.steps() {
        stepper.step(&mut v, spec.epsilon, spec.dt);
        check_state(&v, s)?;
        if s % spec.subsample == 0 {
            out.push(with_endpoint(&u0.grid, n, &v)?);
        }
    }
    Ok(out)
}

/// Random initial condition on the grid of `spec`.
pub fn sample_initial_condition(spec: &AllenCahnSpec, seed: u64) -> Result<GridFunction> {
    spec.validate()?;
    let n = spec.nodes - 1;
    let (field, _) = sample_spectral_field(n, spec.tau, spec.alpha, seed);
    with_endpoint(&spec.grid(), n, &field)
}

/// Every second node of a periodic state.
pub fn subsample_state(u: &GridFunction, lf_grid: &Grid) -> Result<GridFunction> {
    let m = u.grid.axes[0].n;
    let k = lf_grid.axes[0].n;
    if (m - 1) != 2 * (k - 1) {
        return Err(ProblemError::Shape(format!("cannot subsample {m} nodes onto {k}")));
    }
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            out[i * k + j] = u.values[2 * i * m + 2 * j];
        }
    }
    GridFunction::new(lf_grid.clone(), 1, out)
}

/// Coarse prediction of the next emitted state: one step of `subsample * dt`
/// on the coarse grid, interpolated back to the fine grid.
pub fn lf_next_state(lf_state: &GridFunction, spec: &AllenCahnSpec) -> Result<GridFunction> {
    let lf_dt = spec.dt * spec.subsample as f64;
    let coarse = step_allen_cahn(lf_state, spec.epsilon, lf_dt)?;
    interpolate(&coarse, &spec.grid())
}
