use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ProblemError, Result};

/// Closed-form benchmark families. Every evaluator is pointwise in the input
/// vector `a` (one entry per input channel) and the point's coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Benchmark {
    B1,
    B2,
    B3,
    B4,
    B5,
}

/// Which closed-form model to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchFidelity {
    High,
    /// Zero-based low-fidelity model index.
    Low(usize),
}

/// Dimension of the design points carried by each B5 grid index.
pub const B5_DIM: usize = 8;
const B5_DESIGN_SEED: u64 = 0xB5;

impl Benchmark {
    pub fn k_range(self) -> (f64, f64) {
        match self {
            Benchmark::B1 | Benchmark::B3 => (10.0, 14.0),
            Benchmark::B2 => (8.0, 10.0),
            Benchmark::B4 => (0.1, 1.2),
            Benchmark::B5 => (0.8, 1.2),
        }
    }

    pub fn lf_count(self) -> usize {
        match self {
            Benchmark::B3 | Benchmark::B4 => 3,
            _ => 1,
        }
    }

    pub fn spatial_dim(self) -> usize {
        if self == Benchmark::B2 {
            2
        } else {
            1
        }
    }

    pub fn input_channels(self) -> usize {
        if self == Benchmark::B5 {
            B5_DIM
        } else {
            1
        }
    }

    /// Domain of each spatial axis.
    pub fn domain(self) -> (f64, f64) {
        match self {
            Benchmark::B4 => (-2.0, 3.0),
            _ => (0.0, 1.0),
        }
    }

    /// Input vector at a point for parameter `k`. B5 reads its 8-D design
    /// point from `design` instead of the grid coordinates.
    pub fn input(self, k: f64, coords: &[f64], design: Option<&[f64]>) -> Vec<f64> {
        match self {
            Benchmark::B1 | Benchmark::B2 | Benchmark::B3 => vec![k * coords[0] - 4.0],
            Benchmark::B4 => vec![k * coords[0]],
            Benchmark::B5 => design
                .expect("B5 needs a design point")
                .iter()
                .map(|x| k * x)
                .collect(),
        }
    }

    pub fn eval(self, fidelity: BenchFidelity, a: &[f64], coords: &[f64]) -> Result<f64> {
        let bad = || ProblemError::Fidelity(format!("{self:?} has no model {fidelity:?}"));
        let x = coords[0];
        let v = match (self, fidelity) {
            (Benchmark::B1, BenchFidelity::High) => a[0].sin(),
            (Benchmark::B1, BenchFidelity::Low(0)) => a[0].sin() + x - 0.25 * a[0],
            (Benchmark::B2, f) => {
                let y = coords[1];
                match f {
                    BenchFidelity::High => a[0].cos() * y.cos().powi(2),
                    BenchFidelity::Low(0) => a[0].cos() * y.cos() + x,
                    _ => return Err(bad()),
                }
            }
            (Benchmark::B3, f) => {
                let hf = (6.0 * x - 2.0).powi(2) * a[0].sin();
                let scale = match f {
                    BenchFidelity::High => return Ok(hf),
                    BenchFidelity::Low(0) => 3.0 * x * x - 0.1 * x - 1.3,
                    BenchFidelity::Low(1) => x * x * x + x * x - 0.1 * x + 0.5,
                    BenchFidelity::Low(2) => -2.0 * x + 4.0,
                    _ => return Err(bad()),
                };
                scale * hf - (x + 8.0)
            }
            (Benchmark::B4, f) => {
                let a = a[0];
                let cubic = match f {
                    BenchFidelity::High => 0.1,
                    BenchFidelity::Low(0) => 0.2,
                    BenchFidelity::Low(1) | BenchFidelity::Low(2) => 0.0,
                    _ => return Err(bad()),
                };
                let linear = if f == BenchFidelity::Low(2) { 0.0 } else { a };
                1.0 / (cubic * a * a * a + a * a + linear + 1.0)
            }
            (Benchmark::B5, f) => {
                let s = |v: f64| v.sin();
                let t = |ai: f64| 16.0 * ai / 15.0 - 1.0;
                match f {
                    BenchFidelity::High => 2.4 + a.iter().map(|&ai| s(t(ai)) + s(t(ai)).powi(2)).sum::<f64>(),
                    BenchFidelity::Low(0) => -2.4 + a.iter().map(|&ai| s(ai) + s(t(ai)).powi(2)).sum::<f64>(),
                    _ => return Err(bad()),
                }
            }
            _ => return Err(bad()),
        };
        Ok(v)
    }

    /// Parameter `k` for the sample with the given seed.
    pub fn draw_k(self, seed: u64) -> f64 {
        let (lo, hi) = self.k_range();
        ChaCha8Rng::seed_from_u64(seed).random_range(lo..hi)
    }
}

/// Fixed design points in `[-1, 1]^8`, one per grid index, row-major `[m, 8]`.
pub fn b5_design(m: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(B5_DESIGN_SEED);
    (0..m * B5_DIM).map(|_| rng.random_range(-1.0..=1.0)).collect()
}
