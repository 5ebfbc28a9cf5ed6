use serde::{Deserialize, Serialize};

use super::{ProblemError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// `n` points including both ends.
    Nodes,
    /// `n` cell midpoints.
    CellCenters,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub placement: Placement,
}

impl Axis {
    pub fn nodes(lo: f64, hi: f64, n: usize) -> Self {
        Self {
            lo,
            hi,
            n,
            placement: Placement::Nodes,
        }
    }

    pub fn cells(lo: f64, hi: f64, n: usize) -> Self {
        Self {
            lo,
            hi,
            n,
            placement: Placement::CellCenters,
        }
    }

    pub fn spacing(&self) -> f64 {
        match self.placement {
            Placement::Nodes => (self.hi - self.lo) / (self.n.max(2) - 1) as f64,
            Placement::CellCenters => (self.hi - self.lo) / self.n as f64,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        match self.placement {
            Placement::Nodes if self.n == 1 => 0.5 * (self.lo + self.hi),
            Placement::Nodes => self.lo + i as f64 * self.spacing(),
            Placement::CellCenters => self.lo + (i as f64 + 0.5) * self.spacing(),
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Left source index and fractional offset for linear interpolation at `t`.
    /// The offset falls outside `[0, 1]` when `t` lies beyond the outer points.
    fn locate(&self, t: f64) -> (usize, f64) {
        if self.n == 1 {
            return (0, 0.0);
        }
        let first = self.coord(0);
        let h = self.spacing();
        let s = (t - first) / h;
        let j = (s.floor().max(0.0) as usize).min(self.n - 2);
        (j, s - j as f64)
    }
}

/// Rectilinear grid in one or two dimensions; axis 0 varies slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Self {
        Self { axes }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn extents(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of flat point `p` (row-major).
    pub fn point(&self, mut p: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (d, axis) in self.axes.iter().enumerate().rev() {
            out[d] = axis.coord(p % axis.n);
            p /= axis.n;
        }
        out
    }

    /// One channel per axis holding that axis' coordinate, layout `[dim, points]`.
    pub fn coordinate_channels(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; self.dim() * n];
        for p in 0..n {
            for (d, c) in self.point(p).into_iter().enumerate() {
                out[d * n + p] = c;
            }
        }
        out
    }

    pub fn same_domain(&self, other: &Grid) -> bool {
        const TOL: f64 = 1e-12;
        self.dim() == other.dim()
            && self
                .axes
                .iter()
                .zip(&other.axes)
                .all(|(a, b)| (a.lo - b.lo).abs() < TOL && (a.hi - b.hi).abs() < TOL)
    }
}

/// A multi-channel field sampled on a [`Grid`], values laid out `[C, points...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || values.len() != channels * grid.len() {
            return Err(ProblemError::Shape(format!(
                "{} values for {channels} channels on a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            channels,
            values,
        })
    }

    /// Evaluates `f` at every grid point; `f` returns one value per channel.
    pub fn from_fn(grid: Grid, channels: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let n = grid.len();
        let mut values = vec![0.0; channels * n];
        for p in 0..n {
            let v = f(&grid.point(p));
            if v.len() != channels {
                return Err(ProblemError::Shape(format!("expected {channels} channels, got {}", v.len())));
            }
            for (c, x) in v.into_iter().enumerate() {
                values[c * n + p] = x;
            }
        }
        Self::new(grid, channels, values)
    }

    pub fn points(&self) -> usize {
        self.grid.len()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.points();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn select(&self, c: usize) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            channels: 1,
            values: self.channel(c).to_vec(),
        }
    }

    /// Channel concatenation on a shared grid.
    pub fn concat(parts: &[&GridFunction]) -> Result<GridFunction> {
        let first = parts.first().ok_or_else(|| ProblemError::Shape("nothing to concatenate".into()))?;
        if parts.iter().any(|p| p.grid != first.grid) {
            return Err(ProblemError::DomainMismatch("concatenated fields live on different grids".into()));
        }
        let values: Vec<f64> = parts.iter().flat_map(|p| p.values.iter().copied()).collect();
        Self::new(first.grid.clone(), parts.iter().map(|p| p.channels).sum(), values)
    }

    /// `[C, extents...]` tensor view.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let mut shape = vec![self.channels];
        shape.extend(self.grid.extents());
        Tensor::new(shape, self.values.clone()).map_err(|e| ProblemError::Shape(e.to_string()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            channels: self.channels,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        if self.grid != other.grid || self.channels != other.channels {
            return Err(ProblemError::DomainMismatch("fields differ in grid or channel count".into()));
        }
        Ok(GridFunction {
            grid: self.grid.clone(),
            channels: self.channels,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

/// Piecewise-linear (1D) or bilinear (2D) transfer onto `target`, extrapolating
/// linearly beyond the outermost source points. Identical grids return an exact copy.
pub fn interpolate(field: &GridFunction, target: &Grid) -> Result<GridFunction> {
    if field.grid == *target {
        return Ok(field.clone());
    }
    if !field.grid.same_domain(target) {
        return Err(ProblemError::DomainMismatch(format!(
            "cannot interpolate from {:?} to {:?}",
            field.grid.axes, target.axes
        )));
    }
    let src = &field.grid;
    let stencils: Vec<Vec<(usize, f64)>> = src
        .axes
        .iter()
        .zip(&target.axes)
        .map(|(s, t)| t.coords().into_iter().map(|x| s.locate(x)).collect())
        .collect();
    let n_src = src.len();
    let n_dst = target.len();
    let mut values = vec![0.0; field.channels * n_dst];
    for c in 0..field.channels {
        let v = field.channel(c);
        let out = &mut values[c * n_dst..(c + 1) * n_dst];
        match src.dim() {
            1 => {
                let n = src.axes[0].n;
                for (o, &(j, w)) in out.iter_mut().zip(&stencils[0]) {
                    *o = if n == 1 { v[0] } else { (1.0 - w) * v[j] + w * v[j + 1] };
                }
            }
            2 => {
                let (n0, n1) = (src.axes[0].n, src.axes[1].n);
                let m1 = target.axes[1].n;
                for (i, &(j0, w0)) in stencils[0].iter().enumerate() {
                    for (k, &(j1, w1)) in stencils[1].iter().enumerate() {
                        let at = |a: usize, b: usize| v[a.min(n0 - 1) * n1 + b.min(n1 - 1)];
                        let lo = (1.0 - w1) * at(j0, j1) + w1 * at(j0, j1 + 1);
                        let hi = (1.0 - w1) * at(j0 + 1, j1) + w1 * at(j0 + 1, j1 + 1);
                        out[i * m1 + k] = (1.0 - w0) * lo + w0 * hi;
                    }
                }
            }
            d => return Err(ProblemError::Shape(format!("unsupported grid rank {d}"))),
        }
    }
    debug_assert_eq!(n_src * field.channels, field.values.len());
    GridFunction::new(target.clone(), field.channels, values)
}
