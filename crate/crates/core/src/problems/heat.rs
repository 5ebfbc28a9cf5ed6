use super::grid::{Axis, Grid, GridFunction, Placement};
use super::{ProblemError, Result};

/// Cell-centered `n x n` grid on the unit square.
pub fn heat_grid(n: usize) -> Grid {
    Grid::new(vec![Axis::cells(0.0, 1.0, n), Axis::cells(0.0, 1.0, n)])
}

/// Symmetric positive-definite matrix stored by lower band:
/// `band[i][d] = A[i][i - d]` for `d <= bw`.
struct Banded {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl Banded {
    fn new(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        }
    }

    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert!(j <= i && i - j <= self.bw);
        &mut self.band[i * (self.bw + 1) + (i - j)]
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.band[i * (self.bw + 1) + (i - j)]
        }
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// In-place banded Cholesky `A = L L^T`, then solves for `b`.
    fn solve(mut self, b: &[f64]) -> Result<Vec<f64>> {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = self.get(i, j);
                for k in klo..j {
                    s -= self.get(i, k) * self.get(j, k);
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(ProblemError::Singular("heat FV matrix is not positive definite".into()));
                    }
                    *self.at(i, i) = s.sqrt();
                } else {
                    *self.at(i, j) = s / self.get(j, j);
                }
            }
        }
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let s: f64 = (lo..i).map(|k| self.get(i, k) * y[k]).sum();
            y[i] = (y[i] - s) / self.get(i, i);
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let s: f64 = (i + 1..=hi).map(|k| self.get(k, i) * y[k]).sum();
            y[i] = (y[i] - s) / self.get(i, i);
        }
        Ok(y)
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

fn check_field(a: &GridFunction) -> Result<usize> {
    let n = match a.grid.axes.as_slice() {
        [x, y] if x.n == y.n && x.placement == Placement::CellCenters && y.placement == Placement::CellCenters => x.n,
        _ => return Err(ProblemError::Shape("heat conductivity must live on a square cell grid".into())),
    };
    if a.channels != 1 {
        return Err(ProblemError::Shape("heat conductivity must have one channel".into()));
    }
    if let Some(v) = a.values.iter().find(|&&v| !(v > 0.0)) {
        return Err(ProblemError::Invalid(format!("conductivity must be positive, found {v}")));
    }
    Ok(n)
}

/// Assembles the two-point flux system. Unknown `(i, j)` (x index `i`) has
/// flat index `i * n + j`, matching the grid layout.
fn assemble(a: &[f64], n: usize) -> (Banded, Vec<f64>) {
    let mut m = Banded::new(n * n, n);
    let mut rhs = vec![0.0; n * n];
    let idx = |i: usize, j: usize| i * n + j;
    for i in 0..n {
        for j in 0..n {
            let p = idx(i, j);
            let mut diag = 0.0;
            if i + 1 < n {
                let t = harmonic(a[p], a[idx(i + 1, j)]);
                diag += t;
                *m.at(idx(i + 1, j), p) -= t;
            }
            if i > 0 {
                diag += harmonic(a[p], a[idx(i - 1, j)]);
            }
            if j + 1 < n {
                let t = harmonic(a[p], a[idx(i, j + 1)]);
                diag += t;
                *m.at(idx(i, j + 1), p) -= t;
            }
            if j > 0 {
                diag += harmonic(a[p], a[idx(i, j - 1)]);
            }
            // Dirichlet faces sit half a cell away
            if i == 0 {
                diag += 2.0 * a[p];
                rhs[p] += 2.0 * a[p];
            }
            if i == n - 1 {
                diag += 2.0 * a[p];
            }
            *m.at(p, p) += diag;
        }
    }
    (m, rhs)
}

/// Solves `-div(a grad u) = 0` on the unit square with `u = 1` at `x = 0`,
/// `u = 0` at `x = 1` and zero flux at `y = 0, 1`.
pub fn solve_heat_fv(a: &GridFunction) -> Result<GridFunction> {
    let n = check_field(a)?;
    let (m, rhs) = assemble(&a.values, n);
    let u = m.solve(&rhs)?;
    GridFunction::new(a.grid.clone(), 1, u)
}

/// Euclidean norm of the discrete residual `A u - b`.
pub fn heat_residual(a: &GridFunction, u: &GridFunction) -> Result<f64> {
    let n = check_field(a)?;
    let (m, rhs) = assemble(&a.values, n);
    let au = m.matvec(&u.values);
    Ok(au.iter().zip(&rhs).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

/// Heat flux entering through `x = 0` and leaving through `x = 1`.
pub fn boundary_fluxes(a: &GridFunction, u: &GridFunction) -> Result<(f64, f64)> {
    let n = check_field(a)?;
    let (mut inflow, mut outflow) = (0.0, 0.0);
    for j in 0..n {
        let first = j;
        let last = (n - 1) * n + j;
        inflow += 2.0 * a.values[first] * (1.0 - u.values[first]);
        outflow += 2.0 * a.values[last] * u.values[last];
    }
    Ok((inflow, outflow))
}
