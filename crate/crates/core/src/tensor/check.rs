use super::{Result, Tensor, TensorError};

/// Central-difference gradient of a scalar function, one coordinate at a time.
pub fn finite_difference_gradient<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> f64,
{
    if !(h > 0.0) {
        return Err(TensorError::Invalid(format!("step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = vec![0.0; x.len()];
    for (i, gi) in grad.iter_mut().enumerate() {
        let x0 = x.data()[i];
        probe.data_mut()[i] = x0 + h;
        let fp = f(&probe);
        probe.data_mut()[i] = x0 - h;
        let fm = f(&probe);
        probe.data_mut()[i] = x0;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(TensorError::NonFiniteProbe { coord: i });
        }
        *gi = (fp - fm) / (2.0 * h);
    }
    Tensor::new(x.shape().to_vec(), grad)
}
