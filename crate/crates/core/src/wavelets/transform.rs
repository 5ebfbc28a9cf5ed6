use crate::tensor::{self, CustomOp, Tensor, TensorError};

use super::{FilterBank, WaveletError, WaveletFamily};

/// One periodized analysis step: `lo[k] = sum_j lo_r[j] x[(2k + j) mod n]`.
fn analyze(x: &[f64], bank: &FilterBank, lo: &mut [f64], hi: &mut [f64]) {
    let n = x.len();
    let taps = bank.lo_r.len();
    for k in 0..n / 2 {
        let (mut a, mut d) = (0.0, 0.0);
        if 2 * k + taps <= n {
            let win = &x[2 * k..2 * k + taps];
            for ((h, g), v) in bank.lo_r.iter().zip(&bank.hi_r).zip(win) {
                a += h * v;
                d += g * v;
            }
        } else {
            for (j, (h, g)) in bank.lo_r.iter().zip(&bank.hi_r).enumerate() {
                let v = x[(2 * k + j) % n];
                a += h * v;
                d += g * v;
            }
        }
        lo[k] = a;
        hi[k] = d;
    }
}

/// Transpose of [`analyze`]; its inverse for orthogonal banks.
fn synthesize(lo: &[f64], hi: &[f64], bank: &FilterBank, out: &mut [f64]) {
    let n = out.len();
    let taps = bank.lo_r.len();
    out.fill(0.0);
    for k in 0..n / 2 {
        let (l, d) = (lo[k], hi[k]);
        if 2 * k + taps <= n {
            let win = &mut out[2 * k..2 * k + taps];
            for ((h, g), o) in bank.lo_r.iter().zip(&bank.hi_r).zip(win) {
                *o += h * l + g * d;
            }
        } else {
            for (j, (h, g)) in bank.lo_r.iter().zip(&bank.hi_r).enumerate() {
                out[(2 * k + j) % n] += h * l + g * d;
            }
        }
    }
}

/// [`analyze`] along the first axis of the `h x w` block stored with row
/// stride `stride`, operating on whole rows.
fn analyze_columns(buf: &mut [f64], h: usize, w: usize, stride: usize, bank: &FilterBank, tmp: &mut [f64]) {
    let half = h / 2;
    tmp[..h * w].fill(0.0);
    for k in 0..half {
        for (j, (hc, gc)) in bank.lo_r.iter().zip(&bank.hi_r).enumerate() {
            let src = (2 * k + j) % h;
            let row = &buf[src * stride..src * stride + w];
            let (lo_part, hi_part) = tmp[..h * w].split_at_mut(half * w);
            let lo = &mut lo_part[k * w..(k + 1) * w];
            let hi = &mut hi_part[k * w..(k + 1) * w];
            for ((a, d), v) in lo.iter_mut().zip(hi.iter_mut()).zip(row) {
                *a += hc * v;
                *d += gc * v;
            }
        }
    }
    for i in 0..h {
        buf[i * stride..i * stride + w].copy_from_slice(&tmp[i * w..(i + 1) * w]);
    }
}

/// Transpose of [`analyze_columns`].
fn synthesize_columns(buf: &mut [f64], h: usize, w: usize, stride: usize, bank: &FilterBank, tmp: &mut [f64]) {
    let half = h / 2;
    tmp[..h * w].fill(0.0);
    for k in 0..half {
        let lo = &buf[k * stride..k * stride + w];
        let hi = &buf[(half + k) * stride..(half + k) * stride + w];
        for (j, (hc, gc)) in bank.lo_r.iter().zip(&bank.hi_r).enumerate() {
            let dst = (2 * k + j) % h;
            let out = &mut tmp[dst * w..(dst + 1) * w];
            for ((o, l), d) in out.iter_mut().zip(lo).zip(hi) {
                *o += hc * l + gc * d;
            }
        }
    }
    for i in 0..h {
        buf[i * stride..i * stride + w].copy_from_slice(&tmp[i * w..(i + 1) * w]);
    }
}

/// Checks that every extent supports `levels` dyadic halvings.
pub fn check_extents(extents: &[usize], levels: usize) -> Result<(), WaveletError> {
    if levels == 0 {
        return Err(WaveletError::ZeroLevels);
    }
    if extents.is_empty() || extents.len() > 2 {
        return Err(WaveletError::UnsupportedRank(extents.len()));
    }
    let step = 1usize
        .checked_shl(levels as u32)
        .ok_or(WaveletError::TooDeep { extent: extents[0], levels })?;
    for &e in extents {
        if step > e {
            return Err(WaveletError::TooDeep { extent: e, levels });
        }
        if e % step != 0 {
            return Err(WaveletError::Indivisible {
                extent: e,
                levels,
                padded: e.div_ceil(step) * step,
            });
        }
    }
    Ok(())
}

/// A validated multilevel periodized transform over a fixed 1D or 2D extent.
///
/// Coefficients use the packed (Mallat) layout with the same size as the
/// input: in 1D `[a_L | d_L | d_(L-1) | ... | d_1]`, in 2D the approximation
/// occupies the top-left `n0/2^L x n1/2^L` block and each level's three detail
/// bands fill the remaining quadrants of its block.
#[derive(Clone, Debug)]
pub struct WaveletPlan {
    bank: FilterBank,
    levels: usize,
    extents: Vec<usize>,
}

impl WaveletPlan {
    pub fn new(family: WaveletFamily, levels: usize, extents: &[usize]) -> Result<Self, WaveletError> {
        check_extents(extents, levels)?;
        Ok(Self {
            bank: FilterBank::new(family),
            levels,
            extents: extents.to_vec(),
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn family(&self) -> WaveletFamily {
        self.bank.family
    }

    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat packed indices of the coarsest level's approximation and detail bands.
    pub fn last_level_region(&self) -> Vec<usize> {
        let shrink = |e: usize| 2 * (e >> self.levels);
        match self.extents.as_slice() {
            [n] => (0..shrink(*n)).collect(),
            [n0, n1] => {
                let (h, w) = (shrink(*n0), shrink(*n1));
                (0..h).flat_map(|i| (0..w).map(move |j| i * n1 + j)).collect()
            }
            _ => unreachable!("rank checked at construction"),
        }
    }

    /// Extents of the retained last-level block.
    pub fn last_level_extents(&self) -> Vec<usize> {
        self.extents.iter().map(|e| 2 * (e >> self.levels)).collect()
    }

    fn check_len(&self, len: usize) -> Result<(), WaveletError> {
        if len != self.len() {
            return Err(WaveletError::Inconsistent(format!(
                "expected {} samples for extents {:?}, got {len}",
                self.len(),
                self.extents
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) -> Result<(), WaveletError> {
        self.check_len(x.len())?;
        self.check_len(out.len())?;
        out.copy_from_slice(x);
        match self.extents.as_slice() {
            [n] => self.forward_1d(out, *n),
            [n0, n1] => self.forward_2d(out, *n0, *n1),
            _ => unreachable!(),
        }
        Ok(())
    }

    pub fn inverse(&self, c: &[f64], out: &mut [f64]) -> Result<(), WaveletError> {
        self.check_len(c.len())?;
        self.check_len(out.len())?;
        out.copy_from_slice(c);
        match self.extents.as_slice() {
            [n] => self.inverse_1d(out, *n),
            [n0, n1] => self.inverse_2d(out, *n0, *n1),
            _ => unreachable!(),
        }
        Ok(())
    }

    fn forward_1d(&self, buf: &mut [f64], n: usize) {
        let mut tmp = vec![0.0; n];
        let mut len = n;
        for _ in 0..self.levels {
            let (lo, hi) = tmp[..len].split_at_mut(len / 2);
            analyze(&buf[..len], &self.bank, lo, hi);
            buf[..len].copy_from_slice(&tmp[..len]);
            len /= 2;
        }
    }

    fn inverse_1d(&self, buf: &mut [f64], n: usize) {
        let mut tmp = vec![0.0; n];
        for lev in (0..self.levels).rev() {
            let len = n >> lev;
            let (lo, hi) = buf[..len].split_at(len / 2);
            synthesize(lo, hi, &self.bank, &mut tmp[..len]);
            buf[..len].copy_from_slice(&tmp[..len]);
        }
    }

    fn forward_2d(&self, buf: &mut [f64], n0: usize, n1: usize) {
        let mut res = vec![0.0; n1];
        let mut block = vec![0.0; n0 * n1];
        for lev in 0..self.levels {
            let (h, w) = (n0 >> lev, n1 >> lev);
            for i in 0..h {
                let row = &mut buf[i * n1..i * n1 + w];
                let (lo, hi) = res[..w].split_at_mut(w / 2);
                analyze(row, &self.bank, lo, hi);
                row.copy_from_slice(&res[..w]);
            }
            analyze_columns(buf, h, w, n1, &self.bank, &mut block);
        }
    }

    fn inverse_2d(&self, buf: &mut [f64], n0: usize, n1: usize) {
        let mut line = vec![0.0; n1];
        let mut block = vec![0.0; n0 * n1];
        for lev in (0..self.levels).rev() {
            let (h, w) = (n0 >> lev, n1 >> lev);
            synthesize_columns(buf, h, w, n1, &self.bank, &mut block);
            for i in 0..h {
                let row = &mut buf[i * n1..i * n1 + w];
                line[..w].copy_from_slice(row);
                let (lo, hi) = line[..w].split_at(w / 2);
                synthesize(lo, hi, &self.bank, row);
            }
        }
    }

    /// Applies the transform to every trailing-extent slice of `x`.
    fn apply_batched(&self, x: &Tensor, inverse: bool) -> tensor::Result<Tensor> {
        let m = self.len();
        let rank = self.extents.len();
        if x.rank() < rank || x.shape()[x.rank() - rank..] != self.extents[..] {
            return Err(TensorError::ShapeMismatch {
                op: "wavelet",
                lhs: x.shape().to_vec(),
                rhs: self.extents.clone(),
            });
        }
        let mut out = vec![0.0; x.len()];
        for (src, dst) in x.data().chunks(m).zip(out.chunks_mut(m)) {
            let r = if inverse { self.inverse(src, dst) } else { self.forward(src, dst) };
            r.map_err(|e| TensorError::Invalid(e.to_string()))?;
        }
        Tensor::new(x.shape().to_vec(), out)
    }
}

/// Structured view of packed coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletCoeffs {
    pub levels: usize,
    /// Extents of the transformed signal.
    pub extents: Vec<usize>,
    /// Coarsest approximation band, row-major.
    pub approx: Vec<f64>,
    /// `details[l]` holds the bands of level `l + 1` (finest first): one band
    /// in 1D; in 2D the (axis0-low, axis1-high), (axis0-high, axis1-low) and
    /// (high, high) bands.
    pub details: Vec<Vec<Vec<f64>>>,
}

fn copy_block(src: &[f64], n1: usize, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Vec<f64> {
    rows.flat_map(|i| cols.clone().map(move |j| (i, j)))
        .map(|(i, j)| src[i * n1 + j])
        .collect()
}

fn paste_block(dst: &mut [f64], n1: usize, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, band: &[f64]) {
    let w = cols.len();
    for (bi, i) in rows.enumerate() {
        for (bj, j) in cols.clone().enumerate() {
            dst[i * n1 + j] = band[bi * w + bj];
        }
    }
}

impl WaveletCoeffs {
    pub fn from_packed(packed: &[f64], extents: &[usize], levels: usize) -> Result<Self, WaveletError> {
        check_extents(extents, levels)?;
        match *extents {
            [n] => {
                let approx = packed[..n >> levels].to_vec();
                let details = (1..=levels)
                    .map(|l| vec![packed[n >> l..n >> (l - 1)].to_vec()])
                    .collect();
                Ok(Self {
                    levels,
                    extents: extents.to_vec(),
                    approx,
                    details,
                })
            }
            [n0, n1] => {
                let approx = copy_block(packed, n1, 0..n0 >> levels, 0..n1 >> levels);
                let details = (1..=levels)
                    .map(|l| {
                        let (h, w) = (n0 >> l, n1 >> l);
                        vec![
                            copy_block(packed, n1, 0..h, w..2 * w),
                            copy_block(packed, n1, h..2 * h, 0..w),
                            copy_block(packed, n1, h..2 * h, w..2 * w),
                        ]
                    })
                    .collect();
                Ok(Self {
                    levels,
                    extents: extents.to_vec(),
                    approx,
                    details,
                })
            }
            _ => Err(WaveletError::UnsupportedRank(extents.len())),
        }
    }

    pub fn to_packed(&self) -> Result<Vec<f64>, WaveletError> {
        check_extents(&self.extents, self.levels)?;
        if self.details.len() != self.levels {
            return Err(WaveletError::Inconsistent(format!(
                "{} detail levels for a {}-level decomposition",
                self.details.len(),
                self.levels
            )));
        }
        let total: usize = self.extents.iter().product();
        let mut out = vec![0.0; total];
        let bad = |what: &str| WaveletError::Inconsistent(format!("{what} has the wrong size"));
        match *self.extents.as_slice() {
            [n] => {
                if self.approx.len() != n >> self.levels {
                    return Err(bad("approximation band"));
                }
                out[..self.approx.len()].copy_from_slice(&self.approx);
                for (l, bands) in (1..=self.levels).zip(&self.details) {
                    if bands.len() != 1 || bands[0].len() != n >> l {
                        return Err(bad(&format!("level {l} detail")));
                    }
                    out[n >> l..n >> (l - 1)].copy_from_slice(&bands[0]);
                }
            }
            [n0, n1] => {
                let (ha, wa) = (n0 >> self.levels, n1 >> self.levels);
                if self.approx.len() != ha * wa {
                    return Err(bad("approximation band"));
                }
                paste_block(&mut out, n1, 0..ha, 0..wa, &self.approx);
                for (l, bands) in (1..=self.levels).zip(&self.details) {
                    let (h, w) = (n0 >> l, n1 >> l);
                    if bands.len() != 3 || bands.iter().any(|b| b.len() != h * w) {
                        return Err(bad(&format!("level {l} detail")));
                    }
                    paste_block(&mut out, n1, 0..h, w..2 * w, &bands[0]);
                    paste_block(&mut out, n1, h..2 * h, 0..w, &bands[1]);
                    paste_block(&mut out, n1, h..2 * h, w..2 * w, &bands[2]);
                }
            }
            _ => return Err(WaveletError::UnsupportedRank(self.extents.len())),
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.approx.len() + self.details.iter().flatten().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm(&self) -> f64 {
        let sq: f64 = self
            .approx
            .iter()
            .chain(self.details.iter().flatten().flatten())
            .map(|v| v * v)
            .sum();
        sq.sqrt()
    }
}

/// Multilevel periodized 1D decomposition.
pub fn dwt(signal: &[f64], family: WaveletFamily, levels: usize) -> Result<WaveletCoeffs, WaveletError> {
    let plan = WaveletPlan::new(family, levels, &[signal.len()])?;
    let mut packed = vec![0.0; signal.len()];
    plan.forward(signal, &mut packed)?;
    WaveletCoeffs::from_packed(&packed, &[signal.len()], levels)
}

/// Inverse of [`dwt`] and [`dwt2`]; dispatches on the coefficient extents.
pub fn idwt(coeffs: &WaveletCoeffs, family: WaveletFamily) -> Result<Vec<f64>, WaveletError> {
    let plan = WaveletPlan::new(family, coeffs.levels, &coeffs.extents)?;
    let packed = coeffs.to_packed()?;
    let mut out = vec![0.0; packed.len()];
    plan.inverse(&packed, &mut out)?;
    Ok(out)
}

/// Multilevel periodized separable 2D decomposition of a row-major field.
pub fn dwt2(
    field: &[f64],
    extents: [usize; 2],
    family: WaveletFamily,
    levels: usize,
) -> Result<WaveletCoeffs, WaveletError> {
    let plan = WaveletPlan::new(family, levels, &extents)?;
    let mut packed = vec![0.0; field.len()];
    plan.forward(field, &mut packed)?;
    WaveletCoeffs::from_packed(&packed, &extents, levels)
}

pub fn idwt2(coeffs: &WaveletCoeffs, family: WaveletFamily) -> Result<Vec<f64>, WaveletError> {
    if coeffs.extents.len() != 2 {
        return Err(WaveletError::UnsupportedRank(coeffs.extents.len()));
    }
    idwt(coeffs, family)
}

/// Packed forward (or inverse) transform as a graph primitive over the
/// trailing spatial axes. The adjoint of an orthogonal transform is its
/// inverse, which is what `backward` applies.
pub struct WaveletOp {
    pub plan: WaveletPlan,
    pub inverse: bool,
}

impl CustomOp for WaveletOp {
    fn name(&self) -> &str {
        if self.inverse {
            "idwt"
        } else {
            "dwt"
        }
    }

    fn forward(&self, inputs: &[&Tensor]) -> tensor::Result<Tensor> {
        self.plan.apply_batched(inputs[0], self.inverse)
    }

    fn backward(&self, _inputs: &[&Tensor], _out: &Tensor, g: &Tensor) -> tensor::Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(self.plan.apply_batched(g, !self.inverse)?)])
    }
}
