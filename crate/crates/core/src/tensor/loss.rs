use super::{CustomOp, Result, Tensor, TensorError};

/// Floor on per-sample target norms so all-zero targets stay well defined.
const NORM_FLOOR: f64 = 1e-12;
/// Keeps the square root differentiable when a prediction matches exactly.
const SQRT_GUARD: f64 = 1e-30;

fn check(op: &'static str, pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() || pred.rank() == 0 {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: pred.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean squared error against a fixed target.
pub struct MseLoss {
    pub target: Tensor,
}

impl CustomOp for MseLoss {
    fn name(&self) -> &str {
        "mse_loss"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let pred = inputs[0];
        check("mse_loss", pred, &self.target)?;
        let n = pred.len() as f64;
        let s: f64 = pred
            .data()
            .iter()
            .zip(self.target.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        Ok(Tensor::scalar(s / n))
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor) -> Result<Vec<Option<Tensor>>> {
        let pred = inputs[0];
        let scale = 2.0 * g.data()[0] / pred.len() as f64;
        let data = pred
            .data()
            .iter()
            .zip(self.target.data())
            .map(|(p, t)| scale * (p - t))
            .collect();
        Ok(vec![Some(Tensor::from_parts(pred.shape().to_vec(), data))])
    }
}

/// Per-sample relative L2 error averaged over the leading (batch) axis.
pub struct RelativeL2Loss {
    pub target: Tensor,
}

impl RelativeL2Loss {
    fn per_sample(&self, pred: &Tensor) -> (usize, Vec<f64>, Vec<f64>) {
        let b = pred.shape()[0];
        let m = pred.len() / b;
        let mut num = Vec::with_capacity(b);
        let mut den = Vec::with_capacity(b);
        for i in 0..b {
            let p = &pred.data()[i * m..(i + 1) * m];
            let t = &self.target.data()[i * m..(i + 1) * m];
            let d: f64 = p.iter().zip(t).map(|(x, y)| (x - y) * (x - y)).sum();
            let n: f64 = t.iter().map(|y| y * y).sum();
            num.push((d + SQRT_GUARD).sqrt());
            den.push(n.sqrt().max(NORM_FLOOR));
        }
        (m, num, den)
    }
}

impl CustomOp for RelativeL2Loss {
    fn name(&self) -> &str {
        "relative_l2_loss"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let pred = inputs[0];
        check("relative_l2_loss", pred, &self.target)?;
        let (_, num, den) = self.per_sample(pred);
        let b = num.len() as f64;
        Ok(Tensor::scalar(num.iter().zip(&den).map(|(n, d)| n / d).sum::<f64>() / b))
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor) -> Result<Vec<Option<Tensor>>> {
        let pred = inputs[0];
        let (m, num, den) = self.per_sample(pred);
        let b = num.len();
        let mut data = vec![0.0; pred.len()];
        for i in 0..b {
            let c = g.data()[0] / (b as f64 * num[i] * den[i]);
            for j in i * m..(i + 1) * m {
                data[j] = c * (pred.data()[j] - self.target.data()[j]);
            }
        }
        Ok(vec![Some(Tensor::from_parts(pred.shape().to_vec(), data))])
    }
}
