use std::f64::consts::PI;

use super::grid::{Axis, Grid, GridFunction, Placement};
use super::{ProblemError, Result};

/// Right-hand-side scale in `u'' = 20 g`.
pub const FORCING_SCALE: f64 = 20.0;

/// Node grid on `[0, 1]` with `n` points.
pub fn poisson_grid(n: usize) -> Grid {
    Grid::new(vec![Axis::nodes(0.0, 1.0, n)])
}

/// Solves `u'' = 20 g` on `[0, 1]` with `u(0) = u(1) = 0` by second-order
/// central differences on the nodes of `g`'s grid.
pub fn solve_poisson_fd(g: &GridFunction) -> Result<GridFunction> {
    let axis = match g.grid.axes.as_slice() {
        [a] if a.placement == Placement::Nodes && a.n >= 3 && g.channels == 1 => *a,
        _ => return Err(ProblemError::Shape("Poisson forcing must be one channel on >= 3 nodes".into())),
    };
    let n = axis.n;
    let h = axis.spacing();
    let m = n - 2;
    // tridiagonal system with sub/super diagonal 1 and diagonal -2
    let rhs: Vec<f64> = (1..n - 1).map(|i| FORCING_SCALE * h * h * g.values[i]).collect();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut denom = -2.0;
    c[0] = 1.0 / denom;
    d[0] = rhs[0] / denom;
    for i in 1..m {
        denom = -2.0 - c[i - 1];
        if denom.abs() < 1e-300 {
            return Err(ProblemError::Singular("Poisson tridiagonal system".into()));
        }
        c[i] = 1.0 / denom;
        d[i] = (rhs[i] - d[i - 1]) / denom;
    }
    let mut u = vec![0.0; n];
    u[m] = d[m - 1];
    for i in (1..m).rev() {
        u[i] = d[i - 1] - c[i - 1] * u[i + 1];
    }
    GridFunction::new(g.grid.clone(), 1, u)
}

/// Least-squares slope of log(max error) against log(dx) for the
/// manufactured solution `u = sin(pi x)`.
pub fn convergence_slope(intervals: &[usize]) -> f64 {
    let pts: Vec<(f64, f64)> = intervals
        .iter()
        .map(|&k| {
            let grid = poisson_grid(k + 1);
            let g = GridFunction::from_fn(grid, 1, |x| vec![-PI * PI * (PI * x[0]).sin() / FORCING_SCALE]).unwrap();
            let u = solve_poisson_fd(&g).unwrap();
            let err = u
                .grid
                .axes[0]
                .coords()
                .iter()
                .zip(&u.values)
                .map(|(x, v)| (v - (PI * x).sin()).abs())
                .fold(0.0, f64::max);
            ((1.0 / k as f64).ln(), err.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_forcing_gives_zero() {
        let g = GridFunction::new(poisson_grid(100), 1, vec![0.0; 100]).unwrap();
        assert!(solve_poisson_fd(&g).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_forcing_is_exact_quadratic() {
        let grid = poisson_grid(100);
        let g = GridFunction::new(grid.clone(), 1, vec![1.0; 100]).unwrap();
        let u = solve_poisson_fd(&g).unwrap();
        assert_eq!(u.values[0], 0.0);
        assert_eq!(u.values[99], 0.0);
        for (i, x) in grid.axes[0].coords().into_iter().enumerate() {
            assert!((u.values[i] - 10.0 * x * (x - 1.0)).abs() < 1e-10);
        }
        let odd = GridFunction::new(poisson_grid(101), 1, vec![1.0; 101]).unwrap();
        assert!((solve_poisson_fd(&odd).unwrap().values[50] + 2.5).abs() < 1e-10);
    }

    #[test]
    fn second_order_convergence() {
        let slope = convergence_slope(&[9, 49, 99]);
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
    }
}
