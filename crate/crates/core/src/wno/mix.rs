use std::sync::Arc;

use crate::tensor::{self, CustomOp, Tensor, TensorError};

/// Per-position channel mixing on a fixed set of packed wavelet coefficients.
///
/// Inputs are `coeffs: [B, Cin, spatial...]` and `weights: [r..., Cin, Cout]`
/// where `r...` are the extents of the retained block and `region[s]` is the
/// flat spatial index of retained position `s`. Positions outside the region
/// are zero in the output.
pub struct SpectralMix {
    pub region: Arc<[usize]>,
}

impl SpectralMix {
    fn dims(&self, x: &Tensor, w: &Tensor) -> tensor::Result<(usize, usize, usize, usize)> {
        let s = self.region.len();
        let bad = || TensorError::ShapeMismatch {
            op: "spectral_mix",
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        };
        if x.rank() < 3 || w.rank() < 3 {
            return Err(bad());
        }
        let cin = x.shape()[1];
        let cout = w.shape()[w.rank() - 1];
        if w.shape()[w.rank() - 2] != cin || w.len() != s * cin * cout {
            return Err(bad());
        }
        let m: usize = x.shape()[2..].iter().product();
        if self.region.iter().any(|&p| p >= m) {
            return Err(bad());
        }
        Ok((x.shape()[0], cin, cout, m))
    }
}

impl CustomOp for SpectralMix {
    fn name(&self) -> &str {
        "spectral_mix"
    }

    fn forward(&self, inputs: &[&Tensor]) -> tensor::Result<Tensor> {
        let (x, w) = (inputs[0], inputs[1]);
        let (batch, cin, cout, m) = self.dims(x, w)?;
        let (xd, wd) = (x.data(), w.data());
        let mut out = vec![0.0; batch * cout * m];
        let mut xs = vec![0.0; cin];
        let mut ys = vec![0.0; cout];
        for b in 0..batch {
            for (s, &pos) in self.region.iter().enumerate() {
                for (i, v) in xs.iter_mut().enumerate() {
                    *v = xd[(b * cin + i) * m + pos];
                }
                ys.fill(0.0);
                for (i, &xv) in xs.iter().enumerate() {
                    let row = &wd[(s * cin + i) * cout..(s * cin + i + 1) * cout];
                    for (y, &wv) in ys.iter_mut().zip(row) {
                        *y += xv * wv;
                    }
                }
                for (o, &y) in ys.iter().enumerate() {
                    out[(b * cout + o) * m + pos] = y;
                }
            }
        }
        let mut shape = x.shape().to_vec();
        shape[1] = cout;
        Tensor::new(shape, out)
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor) -> tensor::Result<Vec<Option<Tensor>>> {
        let (x, w) = (inputs[0], inputs[1]);
        let (batch, cin, cout, m) = self.dims(x, w)?;
        let (xd, wd, gd) = (x.data(), w.data(), g.data());
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        let mut gs = vec![0.0; cout];
        for b in 0..batch {
            for (s, &pos) in self.region.iter().enumerate() {
                for (o, v) in gs.iter_mut().enumerate() {
                    *v = gd[(b * cout + o) * m + pos];
                }
                for i in 0..cin {
                    let base = (s * cin + i) * cout;
                    let xv = xd[(b * cin + i) * m + pos];
                    let mut acc = 0.0;
                    for o in 0..cout {
                        acc += wd[base + o] * gs[o];
                        dw[base + o] += xv * gs[o];
                    }
                    dx[(b * cin + i) * m + pos] = acc;
                }
            }
        }
        Ok(vec![
            Some(Tensor::new(x.shape().to_vec(), dx)?),
            Some(Tensor::new(w.shape().to_vec(), dw)?),
        ])
    }
}
