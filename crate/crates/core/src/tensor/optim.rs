use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for a list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, applied in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if !(cfg.lr > 0.0) {
        return Err(TensorError::Invalid(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TensorError::Invalid(format!(
            "adam: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.len() != m.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *pi -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = vec![Tensor::from_vec(vec![1.0, -2.0, 3.0]).unwrap()];
        let g = vec![Tensor::zeros(vec![3])];
        let mut s = AdamState::new(&p);
        for _ in 0..10 {
            adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p[0].data(), &[1.0, -2.0, 3.0]);
        assert_eq!(s.step(), 10);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![Tensor::scalar(0.0)];
        let g = vec![Tensor::scalar(1.0)];
        let mut s = AdamState::new(&p);
        let cfg = AdamConfig { lr: 0.1, ..Default::default() };
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        // bias-corrected m = v = 1, so the step is lr / (1 + eps)
        assert!((p[0].item().unwrap() + 0.1).abs() < 1e-8);
    }

    #[test]
    fn disjoint_parameters_update_independently() {
        let cfg = AdamConfig { lr: 0.05, ..Default::default() };
        let a0 = Tensor::from_vec(vec![0.3, -0.1]).unwrap();
        let b0 = Tensor::from_vec(vec![1.0]).unwrap();
        let ga = Tensor::from_vec(vec![0.7, -2.0]).unwrap();
        let gb = Tensor::from_vec(vec![0.25]).unwrap();

        let mut joint = vec![a0.clone(), b0.clone()];
        let mut sj = AdamState::new(&joint);
        let mut sa_p = vec![a0];
        let mut sb_p = vec![b0];
        let mut sa = AdamState::new(&sa_p);
        let mut sb = AdamState::new(&sb_p);
        for _ in 0..3 {
            adam_step(&mut joint, &[ga.clone(), gb.clone()], &mut sj, &cfg).unwrap();
            adam_step(&mut sa_p, &[ga.clone()], &mut sa, &cfg).unwrap();
            adam_step(&mut sb_p, &[gb.clone()], &mut sb, &cfg).unwrap();
        }
        assert_eq!(joint[0], sa_p[0]);
        assert_eq!(joint[1], sb_p[0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = vec![Tensor::zeros(vec![2])];
        let g = vec![Tensor::zeros(vec![3])];
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &g, &mut s, &AdamConfig::default()).is_err());
    }
}
