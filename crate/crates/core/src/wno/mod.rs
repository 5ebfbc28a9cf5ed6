//! Wavelet neural operator: pointwise lift, wavelet kernel layers, pointwise projection.
//!
//! Tensors flowing through the network have layout `[B, C, spatial...]`. Every
//! kernel layer computes
//!
//! ```text
//! v' = act( idwt(mix(dwt(v))) + W v + b )
//! ```
//!
//! where `mix` multiplies the coarsest level's approximation and detail
//! coefficients by a learned `C x C` matrix per coefficient position. Finer
//! detail coefficients are dropped, so the kernel term is a pure function of
//! the retained block. The last layer uses the identity activation.
//!
//! Grids whose extents are not divisible by `2^levels` are cropped to the
//! largest compatible extent on entry and restored by edge replication on
//! exit.

mod mix;

pub use mix::SpectralMix;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Activation, Graph, ParamId, Tensor, TensorError, Var};
use crate::wavelets::{WaveletError, WaveletFamily, WaveletOp, WaveletPlan};

#[derive(Debug, Error)]
pub enum WnoError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("expected {expected} input channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("input shape {0:?} does not match the configured spatial rank")]
    Shape(Vec<usize>),
    #[error(
        "grid {grid:?} gives a retained wavelet block of {got:?} but the parameters were built for {expected:?}"
    )]
    Resolution {
        grid: Vec<usize>,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("kernel layer {index}: {source}")]
    Layer { index: usize, source: TensorError },
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = WnoError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WnoConfig {
    /// 1 or 2.
    pub spatial_dim: usize,
    /// d_a, counting coordinate and low-fidelity channels.
    pub in_channels: usize,
    /// d_v.
    pub width: usize,
    /// d_u.
    pub out_channels: usize,
    pub n_layers: usize,
    pub wavelet: WaveletFamily,
    pub levels: usize,
    pub activation: Activation,
    /// Hidden width of the two-layer projection.
    pub proj_hidden: usize,
}

impl Default for WnoConfig {
    fn default() -> Self {
        Self {
            spatial_dim: 1,
            in_channels: 2,
            width: 64,
            out_channels: 1,
            n_layers: 4,
            wavelet: WaveletFamily::Db4,
            levels: 3,
            activation: Activation::Gelu,
            proj_hidden: 128,
        }
    }
}

impl WnoConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(WnoError::Config(m));
        if !(1..=2).contains(&self.spatial_dim) {
            return err(format!("spatial_dim must be 1 or 2, got {}", self.spatial_dim));
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.proj_hidden == 0 {
            return err("channel counts must be positive".into());
        }
        if self.width < self.in_channels {
            return err(format!(
                "width {} is smaller than the input channel count {}",
                self.width, self.in_channels
            ));
        }
        if self.n_layers == 0 {
            return err("at least one kernel layer is required".into());
        }
        if self.levels == 0 {
            return Err(WaveletError::ZeroLevels.into());
        }
        Ok(())
    }

    /// Extents the network actually operates on for a given grid.
    pub fn model_extents(&self, grid: &[usize]) -> Result<Vec<usize>> {
        if grid.len() != self.spatial_dim {
            return Err(WnoError::Shape(grid.to_vec()));
        }
        let step = 1usize << self.levels;
        grid.iter()
            .map(|&e| {
                if e < step {
                    Err(WaveletError::TooDeep {
                        extent: e,
                        levels: self.levels,
                    }
                    .into())
                } else {
                    Ok(e / step * step)
                }
            })
            .collect()
    }

    /// Shapes of every parameter tensor, in storage order.
    pub fn param_shapes(&self, grid: &[usize]) -> Result<Vec<Vec<usize>>> {
        self.validate()?;
        let plan = WaveletPlan::new(self.wavelet, self.levels, &self.model_extents(grid)?)?;
        let (a, v, u, h) = (self.in_channels, self.width, self.out_channels, self.proj_hidden);
        let mut spectral = plan.last_level_extents();
        spectral.extend([v, v]);
        let mut shapes = vec![vec![v, a], vec![v]];
        for _ in 0..self.n_layers {
            shapes.extend([spectral.clone(), vec![v, v], vec![v]]);
        }
        shapes.extend([vec![h, v], vec![h], vec![u, h], vec![u]]);
        Ok(shapes)
    }
}

/// All learnable tensors of one network, plus the config and grid that shaped them.
///
/// Storage order: lift weight and bias; per layer the spectral weights
/// `[r..., C, C]`, the pointwise weight `[C, C]` and bias `[C]`; then the two
/// projection weights and biases.
#[derive(Clone, Debug, PartialEq)]
pub struct WnoParams {
    pub config: WnoConfig,
    pub grid: Vec<usize>,
    pub tensors: Vec<Tensor>,
}

/// Serializable description of a [`WnoParams`] blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WnoManifest {
    pub config: WnoConfig,
    pub grid: Vec<usize>,
    pub shapes: Vec<Vec<usize>>,
    pub param_count: usize,
}

fn uniform(shape: Vec<usize>, bound: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape, data).expect("finite uniform draws")
}

pub fn init_params(config: &WnoConfig, grid: &[usize], seed: u64) -> Result<WnoParams> {
    let shapes = config.param_shapes(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectral_bound = 1.0 / (config.width * config.width) as f64;
    let n = shapes.len();
    let tensors = shapes
        .into_iter()
        .enumerate()
        .map(|(i, shape)| {
            let is_spectral = i >= 2 && i < n - 4 && (i - 2) % 3 == 0;
            let bound = if is_spectral {
                spectral_bound
            } else {
                // biases share the fan-in of the weight they follow
                let fan_in = match i {
                    0 | 1 => config.in_channels,
                    _ if i >= n - 2 => config.proj_hidden,
                    _ => config.width,
                };
                1.0 / (fan_in as f64).sqrt()
            };
            uniform(shape, bound, &mut rng)
        })
        .collect();
    Ok(WnoParams {
        config: config.clone(),
        grid: grid.to_vec(),
        tensors,
    })
}

impl WnoParams {
    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn lift(&self) -> (&Tensor, &Tensor) {
        (&self.tensors[0], &self.tensors[1])
    }

    /// Spectral weights, pointwise weight and bias of kernel layer `l`.
    pub fn layer(&self, l: usize) -> (&Tensor, &Tensor, &Tensor) {
        let i = 2 + 3 * l;
        (&self.tensors[i], &self.tensors[i + 1], &self.tensors[i + 2])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut Tensor, &mut Tensor, &mut Tensor) {
        let i = 2 + 3 * l;
        let [s, w, b] = &mut self.tensors[i..i + 3] else {
            unreachable!()
        };
        (s, w, b)
    }

    pub fn projection(&self) -> [&Tensor; 4] {
        let n = self.tensors.len();
        [&self.tensors[n - 4], &self.tensors[n - 3], &self.tensors[n - 2], &self.tensors[n - 1]]
    }

    /// Registers every tensor as a graph parameter with `ParamId(i)`.
    pub fn register(&self, g: &mut Graph) -> Vec<Var> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| g.param(ParamId(i), t.clone()))
            .collect()
    }

    pub fn manifest(&self) -> WnoManifest {
        WnoManifest {
            config: self.config.clone(),
            grid: self.grid.clone(),
            shapes: self.tensors.iter().map(|t| t.shape().to_vec()).collect(),
            param_count: self.param_count(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn from_flat(manifest: &WnoManifest, flat: &[f64]) -> Result<Self> {
        let expected = manifest.config.param_shapes(&manifest.grid)?;
        if expected != manifest.shapes {
            return Err(WnoError::Config(
                "manifest shapes disagree with its config and grid".into(),
            ));
        }
        let total: usize = expected.iter().map(|s| s.iter().product::<usize>()).sum();
        if total != flat.len() || total != manifest.param_count {
            return Err(WnoError::Config(format!(
                "parameter blob holds {} values, manifest expects {total}",
                flat.len()
            )));
        }
        let mut offset = 0;
        let mut tensors = Vec::with_capacity(expected.len());
        for shape in expected {
            let n: usize = shape.iter().product();
            tensors.push(Tensor::new(shape, flat[offset..offset + n].to_vec())?);
            offset += n;
        }
        Ok(Self {
            config: manifest.config.clone(),
            grid: manifest.grid.clone(),
            tensors,
        })
    }

    /// Forward pass without gradient tracking.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars: Vec<Var> = self.tensors.iter().map(|t| g.constant(t.clone())).collect();
        let x = g.constant(input.clone());
        let y = forward(&mut g, &vars, &self.config, x)?;
        Ok(g.value(y).clone())
    }
}

/// Flat indices mapping a `[lead, dst...]` block onto `[lead, src...]`, clamping
/// each coordinate to the source extent. Crops when `dst <= src` and
/// replicates the last row/column when `dst > src`.
fn window_index(lead: usize, src: &[usize], dst: &[usize]) -> Arc<[usize]> {
    let src_n: usize = src.iter().product();
    let dst_n: usize = dst.iter().product();
    let mut idx = Vec::with_capacity(lead * dst_n);
    for l in 0..lead {
        for flat in 0..dst_n {
            let mut rem = flat;
            let mut coords = vec![0; dst.len()];
            for (c, &e) in coords.iter_mut().zip(dst).rev() {
                *c = rem % e;
                rem /= e;
            }
            let s = coords
                .iter()
                .zip(src)
                .fold(0, |acc, (&c, &e)| acc * e + c.min(e - 1));
            idx.push(l * src_n + s);
        }
    }
    idx.into()
}

pub fn lift(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let (got, expected) = (g.value(x).shape()[1], g.value(w).shape()[1]);
    if got != expected {
        return Err(WnoError::ChannelMismatch { expected, got });
    }
    Ok(g.linear(x, w, Some(b))?)
}

/// One kernel layer; `layer` is `[spectral, w, b]`.
pub fn kernel_layer(
    g: &mut Graph,
    v: Var,
    layer: [Var; 3],
    plan: &WaveletPlan,
    act: Activation,
    index: usize,
) -> Result<Var> {
    let tag = |source: TensorError| WnoError::Layer { index, source };
    let [spectral, w, b] = layer;
    let fwd = Arc::new(WaveletOp {
        plan: plan.clone(),
        inverse: false,
    });
    let inv = Arc::new(WaveletOp {
        plan: plan.clone(),
        inverse: true,
    });
    let mix = Arc::new(SpectralMix {
        region: plan.last_level_region().into(),
    });
    let c = g.custom(fwd, &[v]).map_err(tag)?;
    let m = g.custom(mix, &[c, spectral]).map_err(tag)?;
    let k = g.custom(inv, &[m]).map_err(tag)?;
    let p = g.linear(v, w, Some(b)).map_err(tag)?;
    let s = g.add(k, p).map_err(tag)?;
    g.activation(s, act).map_err(tag)
}

/// Full network on `input: [B, d_a, spatial...]`, returning `[B, d_u, spatial...]`.
///
/// `vars` are the parameter nodes in storage order (see [`WnoParams::register`]).
pub fn forward(g: &mut Graph, vars: &[Var], config: &WnoConfig, input: Var) -> Result<Var> {
    config.validate()?;
    let shape = g.value(input).shape().to_vec();
    if shape.len() != 2 + config.spatial_dim {
        return Err(WnoError::Shape(shape));
    }
    if shape[1] != config.in_channels {
        return Err(WnoError::ChannelMismatch {
            expected: config.in_channels,
            got: shape[1],
        });
    }
    if vars.len() != 6 + 3 * config.n_layers {
        return Err(WnoError::Config(format!(
            "{} parameter tensors for a {}-layer network",
            vars.len(),
            config.n_layers
        )));
    }
    let batch = shape[0];
    let grid = &shape[2..];
    let model = config.model_extents(grid)?;
    let plan = WaveletPlan::new(config.wavelet, config.levels, &model)?;
    let spectral = g.value(vars[2]).shape();
    let expected = spectral[..config.spatial_dim].to_vec();
    let got = plan.last_level_extents();
    if expected != got || spectral[config.spatial_dim..] != [config.width, config.width] {
        return Err(WnoError::Resolution {
            grid: grid.to_vec(),
            expected,
            got,
        });
    }

    let resized = model != grid;
    let mut x = input;
    if resized {
        let mut to = vec![batch, config.in_channels];
        to.extend(&model);
        x = g.gather(x, window_index(batch * config.in_channels, grid, &model), to)?;
    }
    let mut v = lift(g, x, vars[0], vars[1])?;
    for l in 0..config.n_layers {
        let act = if l + 1 == config.n_layers {
            Activation::Identity
        } else {
            config.activation
        };
        let i = 2 + 3 * l;
        v = kernel_layer(g, v, [vars[i], vars[i + 1], vars[i + 2]], &plan, act, l)?;
    }
    let n = vars.len();
    let h = g.linear(v, vars[n - 4], Some(vars[n - 3]))?;
    let h = g.activation(h, config.activation)?;
    let mut u = g.linear(h, vars[n - 2], Some(vars[n - 1]))?;
    if resized {
        let mut to = vec![batch, config.out_channels];
        to.extend(grid);
        u = g.gather(u, window_index(batch * config.out_channels, &model, grid), to)?;
    }
    Ok(u)
}
