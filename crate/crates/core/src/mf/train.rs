use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MfError, Result};
use crate::problems::{Dataset, GridFunction};
use crate::tensor::{adam_step, AdamConfig, AdamState, CustomOp, Graph, MseLoss, RelativeL2Loss, Tensor, TensorError};
use crate::wno::{self, init_params, WnoConfig, WnoError, WnoParams};

/// Values below this are treated as a zero spread when standardizing.
const STD_FLOOR: f64 = 1e-12;
/// Samples per forward pass at inference.
const PREDICT_CHUNK: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Per-sample relative L2 norm averaged over the batch.
    #[default]
    RelativeL2,
    Mse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epochs between learning-rate reductions; 0 disables decay.
    pub decay_every: usize,
    pub decay_factor: f64,
    pub loss: LossKind,
    /// Seeds both the initial weights and the per-epoch shuffles.
    pub seed: u64,
    /// Standardize input channels by training-set statistics.
    pub normalize_inputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 20,
            adam: AdamConfig::default(),
            decay_every: 50,
            decay_factor: 0.5,
            loss: LossKind::RelativeL2,
            seed: 0,
            normalize_inputs: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(MfError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(MfError::Config(format!("decay_factor must lie in (0, 1], got {}", self.decay_factor)));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.decay_every == 0 {
            return self.adam.lr;
        }
        self.adam.lr * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// Per-channel affine standardization `(v - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Statistics of each channel over all fields and points. Channels with no
    /// spread keep a unit scale.
    pub fn fit(fields: &[&GridFunction]) -> Self {
        let c = fields[0].channels;
        let mut mean = vec![0.0; c];
        let mut std = vec![0.0; c];
        let count: usize = fields.iter().map(|f| f.points()).sum();
        for ch in 0..c {
            let m = fields.iter().flat_map(|f| f.channel(ch)).sum::<f64>() / count as f64;
            let var = fields.iter().flat_map(|f| f.channel(ch)).map(|v| (v - m).powi(2)).sum::<f64>() / count as f64;
            mean[ch] = m;
            std[ch] = if var.sqrt() > STD_FLOOR { var.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn apply_slice(&self, values: &mut [f64], points: usize, forward: bool) {
        for (ch, chunk) in values.chunks_mut(points).enumerate() {
            let (m, s) = (self.mean[ch], self.std[ch]);
            for v in chunk {
                *v = if forward { (*v - m) / s } else { *v * s + m };
            }
        }
    }

    pub fn apply(&self, f: &GridFunction) -> GridFunction {
        let mut out = f.clone();
        self.apply_slice(&mut out.values, f.points(), true);
        out
    }

    pub fn invert(&self, f: &GridFunction) -> GridFunction {
        let mut out = f.clone();
        self.apply_slice(&mut out.values, f.points(), false);
        out
    }
}

/// A trained network together with the standardization it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedWno {
    pub params: WnoParams,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
}

impl TrainedWno {
    /// Predictions in physical units for fields on the training grid.
    pub fn predict(&self, inputs: &[GridFunction]) -> Result<Vec<GridFunction>> {
        let mut out = Vec::with_capacity(inputs.len());
        let first = inputs.first().ok_or(MfError::EmptyDataset)?;
        let normed: Vec<GridFunction> = inputs.iter().map(|f| self.input_norm.apply(f)).collect();
        let refs: Vec<&GridFunction> = normed.iter().collect();
        for chunk in refs.chunks(PREDICT_CHUNK) {
            let x = stack(chunk)?;
            let y = self.params.predict(&x)?;
            let c = self.params.config.out_channels;
            for values in y.data().chunks(c * first.points()) {
                let f = GridFunction::new(first.grid.clone(), c, values.to_vec())?;
                out.push(self.output_norm.invert(&f));
            }
        }
        Ok(out)
    }

    pub fn predict_one(&self, input: &GridFunction) -> Result<GridFunction> {
        Ok(self.predict(std::slice::from_ref(input))?.remove(0))
    }
}

/// Batches fields into a `[B, C, extents...]` tensor.
pub(crate) fn stack(fields: &[&GridFunction]) -> Result<Tensor> {
    let first = fields.first().ok_or(MfError::EmptyDataset)?;
    let mut shape = vec![fields.len(), first.channels];
    shape.extend(first.grid.extents());
    let mut data = Vec::with_capacity(fields.len() * first.values.len());
    for (i, f) in fields.iter().enumerate() {
        if f.channels != first.channels || f.grid.extents() != first.grid.extents() {
            return Err(MfError::Grid(format!("sample {i} does not share the grid and channels of sample 0")));
        }
        data.extend_from_slice(&f.values);
    }
    Ok(Tensor::new(shape, data)?)
}

/// Result of [`train_wno`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TrainedWno,
    /// Mean training loss of each epoch.
    pub history: Vec<f64>,
    pub best_epoch: usize,
}

fn is_non_finite(e: &WnoError) -> bool {
    matches!(
        e,
        WnoError::Tensor(TensorError::NonFinite { .. }) | WnoError::Layer { source: TensorError::NonFinite { .. }, .. }
    )
}

/// Fits a network to the input/output pairs of `data`.
///
/// Inputs must already carry every channel the network sees. Targets are
/// standardized per channel and inputs too when `train.normalize_inputs` is
/// set. The returned weights are those at the end of the epoch with the lowest
/// mean training loss.
pub fn train_wno(data: &Dataset, config: &WnoConfig, train: &TrainConfig) -> Result<TrainOutcome> {
    train.validate()?;
    config.validate()?;
    if data.is_empty() {
        return Err(MfError::EmptyDataset);
    }
    let inputs: Vec<&GridFunction> = data.samples.iter().map(|s| &s.input).collect();
    let outputs: Vec<&GridFunction> = data.samples.iter().map(|s| &s.output).collect();
    if inputs[0].channels != config.in_channels || outputs[0].channels != config.out_channels {
        return Err(MfError::Config(format!(
            "data has {} -> {} channels, network expects {} -> {}",
            inputs[0].channels, outputs[0].channels, config.in_channels, config.out_channels
        )));
    }
    let input_norm = if train.normalize_inputs {
        Normalizer::fit(&inputs)
    } else {
        Normalizer::identity(config.in_channels)
    };
    let output_norm = Normalizer::fit(&outputs);
    let xs: Vec<GridFunction> = inputs.iter().map(|f| input_norm.apply(f)).collect();
    let ys: Vec<GridFunction> = outputs.iter().map(|f| output_norm.apply(f)).collect();
    // validates shared extents up front
    stack(&xs.iter().collect::<Vec<_>>())?;
    stack(&ys.iter().collect::<Vec<_>>())?;

    let grid = inputs[0].grid.extents();
    let mut params = init_params(config, &grid, train.seed)?;
    let mut state = AdamState::new(&params.tensors);
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(train.epochs);
    let mut best = (f64::INFINITY, 0, params.tensors.clone());
    let n_params = params.tensors.len();

    for epoch in 0..train.epochs {
        order.shuffle(&mut rng);
        let adam = AdamConfig {
            lr: train.lr_at(epoch),
            ..train.adam
        };
        let mut total = 0.0;
        for batch in order.chunks(train.batch_size) {
            let x = stack(&batch.iter().map(|&i| &xs[i]).collect::<Vec<_>>())?;
            let y = stack(&batch.iter().map(|&i| &ys[i]).collect::<Vec<_>>())?;
            let mut g = Graph::new();
            let vars = params.register(&mut g);
            let xv = g.constant(x);
            let pred = match wno::forward(&mut g, &vars, config, xv) {
                Ok(p) => p,
                Err(e) if is_non_finite(&e) => {
                    return Err(MfError::Diverged {
                        epoch,
                        detail: e.to_string(),
                    })
                }
                Err(e) => return Err(e.into()),
            };
            let loss_op: Arc<dyn CustomOp> = match train.loss {
                LossKind::RelativeL2 => Arc::new(RelativeL2Loss { target: y }),
                LossKind::Mse => Arc::new(MseLoss { target: y }),
            };
            let loss = g.custom(loss_op, &[pred])?;
            let value = g.value(loss).item()?;
            if !value.is_finite() {
                return Err(MfError::Diverged {
                    epoch,
                    detail: format!("loss {value}"),
                });
            }
            total += value * batch.len() as f64;
            let grads = g.backward(loss)?;
            let grads: Vec<Tensor> = grads
                .take_ordered(n_params)
                .into_iter()
                .zip(&params.tensors)
                .map(|(g, p)| g.unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
                .collect();
            adam_step(&mut params.tensors, &grads, &mut state, &adam)?;
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() || params.tensors.iter().any(|t| !t.is_finite()) {
            return Err(MfError::Diverged {
                epoch,
                detail: "non-finite weights".into(),
            });
        }
        if mean < best.0 {
            best = (mean, epoch, params.tensors.clone());
        }
        history.push(mean);
        log::debug!("epoch {epoch}: loss {mean:e}");
    }
    params.tensors = best.2;
    Ok(TrainOutcome {
        model: TrainedWno {
            params,
            input_norm,
            output_norm,
        },
        history,
        best_epoch: best.1,
    })
}
