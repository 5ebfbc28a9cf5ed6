use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;

use super::fft::Fft2;
use super::{ProblemError, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-2;

/// Zero-mean Gaussian field with a squared-exponential kernel
/// `exp(-sum_d (x_d - x'_d)^2 / (2 l_d^2))` on a fixed point set.
///
/// The Cholesky factor is computed once at construction.
#[derive(Clone, Debug)]
pub struct GaussianField {
    factor: DMatrix<f64>,
    /// Diagonal jitter that made the kernel matrix factorizable.
    pub jitter: f64,
}

pub fn squared_exponential(p: &[f64], q: &[f64], lengthscales: &[f64]) -> f64 {
    let s: f64 = p
        .iter()
        .zip(q)
        .zip(lengthscales)
        .map(|((a, b), l)| (a - b).powi(2) / (2.0 * l * l))
        .sum();
    (-s).exp()
}

impl GaussianField {
    pub fn new(points: &[Vec<f64>], lengthscales: &[f64]) -> Result<Self> {
        if lengthscales.iter().any(|&l| !(l > 0.0)) {
            return Err(ProblemError::Invalid(format!("lengthscales must be positive: {lengthscales:?}")));
        }
        let n = points.len();
        let kernel = DMatrix::from_fn(n, n, |i, j| squared_exponential(&points[i], &points[j], lengthscales));
        let mut jitter = JITTER_START;
        loop {
            let mut k = kernel.clone();
            for i in 0..n {
                k[(i, i)] += jitter;
            }
            if let Some(ch) = nalgebra::Cholesky::new(k) {
                return Ok(Self {
                    factor: ch.unpack(),
                    jitter,
                });
            }
            jitter *= 10.0;
            if jitter > JITTER_MAX {
                return Err(ProblemError::Cholesky { jitter: jitter / 10.0 });
            }
        }
    }

    pub fn len(&self) -> usize {
        self.factor.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi = DVector::from_fn(self.len(), |_, _| StandardNormal.sample(&mut rng));
        (&self.factor * xi).iter().copied().collect()
    }
}

/// Log-normal draw: returns the Gaussian log-field and its exponential.
pub fn sample_lognormal(field: &GaussianField, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let z = field.sample(seed);
    let a = z.iter().map(|v| v.exp()).collect();
    (z, a)
}

/// Spectral amplitude of the initial-condition field at integer wavenumber
/// `(kx, ky)`: the reciprocal of `tau^(alpha-1) (pi^2 (kx^2 + ky^2) + tau^2)^(alpha/2)`.
pub fn spectral_amplitude(kx: f64, ky: f64, tau: f64, alpha: f64) -> f64 {
    1.0 / (tau.powf(alpha - 1.0) * (PI * PI * (kx * kx + ky * ky) + tau * tau).powf(alpha / 2.0))
}

/// Signed integer wavenumber of FFT bin `j` for `n` points.
pub fn wavenumber(j: usize, n: usize) -> f64 {
    if j <= n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

/// Random periodic field on `n x n` unique points, row-major.
///
/// White noise is transformed, scaled by [`spectral_amplitude`] and
/// transformed back, so the spectrum is Hermitian and the result real. The
/// pointwise variance equals the sum of squared amplitudes. Returns the field
/// and the largest discarded imaginary part.
pub fn sample_spectral_field(n: usize, tau: f64, alpha: f64, seed: u64) -> (Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fft = Fft2::new(n);
    let mut buf: Vec<Complex<f64>> = (0..n * n)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    fft.forward(&mut buf);
    for i in 0..n {
        for j in 0..n {
            let amp = spectral_amplitude(wavenumber(i, n), wavenumber(j, n), tau, alpha);
            buf[i * n + j] *= amp;
        }
    }
    fft.inverse(&mut buf);
    let scale = 1.0 / n as f64;
    let imag = buf.iter().map(|c| (c.im * scale).abs()).fold(0.0, f64::max);
    (buf.iter().map(|c| c.re * scale).collect(), imag)
}
