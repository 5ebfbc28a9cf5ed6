use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Unnormalized 2D FFT on an `n x n` row-major buffer.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn forward(&self, buf: &mut [Complex<f64>]) {
        self.apply(&self.fwd, buf);
    }

    /// Inverse transform without the `1 / n^2` factor.
    pub fn inverse(&self, buf: &mut [Complex<f64>]) {
        self.apply(&self.inv, buf);
    }

    fn apply(&self, fft: &Arc<dyn Fft<f64>>, buf: &mut [Complex<f64>]) {
        let n = self.n;
        fft.process(buf);
        transpose(buf, n);
        fft.process(buf);
        transpose(buf, n);
    }
}

fn transpose(buf: &mut [Complex<f64>], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}
