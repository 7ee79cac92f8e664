//! Per-video training: one frame per Adam step, MSE loss, cosine-annealed
//! learning rate with linear warmup.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::metrics::psnr_from_mse;
use crate::model::{Model, ModelError, Variant};
use crate::residual::{self, LowResFrame, ResidualConfig, ResidualError};
use crate::tensor::{self, AdamConfig, AdamState, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Residual(#[from] ResidualError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Fraction of all steps spent in linear warmup.
    pub warmup: f64,
    pub residual: ResidualConfig,
}

impl TrainConfig {
    /// Running defaults: 500 epochs, seed 0, 10% warmup, `n = 8`.
    pub fn new(variant: Variant) -> Self {
        Self {
            epochs: 500,
            lr: default_lr(variant),
            seed: 0,
            warmup: 0.1,
            residual: ResidualConfig::new(8),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::InvalidConfig(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.warmup) {
            return Err(TrainError::InvalidConfig(format!("warmup fraction {} not in [0, 1)", self.warmup)));
        }
        Ok(())
    }
}

/// 9.9e-4 for the residual variant, 1e-3 for the baseline.
pub fn default_lr(variant: Variant) -> f64 {
    match variant {
        Variant::Residual => 9.9e-4,
        Variant::Baseline => 1e-3,
    }
}

/// Learning rate of zero-based `step` out of `total`: linear ramp to `base`
/// over the warmup steps, then a half cosine that reaches 0 on the last step.
pub fn lr_at(step: usize, total: usize, base: f64, warmup: f64) -> f64 {
    let warm = ((warmup * total as f64).ceil() as usize).min(total);
    if step < warm {
        return base * (step + 1) as f64 / warm as f64;
    }
    let span = total - warm;
    if span <= 1 {
        return base;
    }
    let progress = (step - warm) as f64 / (span - 1) as f64;
    0.5 * base * (1.0 + (PI * progress.min(1.0)).cos())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-frame MSE (pre-clamp) over the epoch.
    pub loss: f64,
    /// Mean per-frame PSNR of those MSE values.
    pub psnr: f64,
}

impl std::fmt::Display for EpochLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "epoch {} loss {:.6e} psnr {}",
            self.epoch,
            self.loss,
            crate::metrics::fmt_db(self.psnr)
        )
    }
}

/// Inputs prepared once per video: the frames and, for the residual variant,
/// the stored low-res frames and the upsampled bases derived from them.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub frames: Vec<Tensor<f32>>,
    pub lowres: Option<Vec<LowResFrame>>,
    pub bases: Option<Vec<Tensor<f32>>>,
}

impl TrainingSet {
    pub fn new(frames: Vec<Tensor<f32>>, variant: Variant, residual: ResidualConfig) -> Result<Self> {
        if frames.is_empty() {
            return Err(TrainError::InvalidConfig("no frames".into()));
        }
        let (lowres, bases) = match variant {
            Variant::Baseline => (None, None),
            Variant::Residual => {
                let (l, b): (Vec<_>, Vec<_>) = frames
                    .iter()
                    .map(|f| residual::residual_base(f, residual))
                    .collect::<std::result::Result<Vec<_>, _>>()?
                    .into_iter()
                    .unzip();
                (Some(l), Some(b))
            }
        };
        Ok(Self { frames, lowres, bases })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn base(&self, i: usize) -> Option<&Tensor<f32>> {
        self.bases.as_ref().map(|b| &b[i])
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: Model<f32>,
    /// Entry 0 evaluates the initialized model; entry `e` summarizes epoch `e`.
    pub log: Vec<EpochLog>,
}

/// Pre-clamp training loss of every frame under the current weights.
pub fn frame_losses(model: &Model<f32>, set: &TrainingSet) -> Result<Vec<f64>> {
    (0..set.len())
        .map(|i| {
            let out = model.forward(&set.frames[i].detach(), set.base(i))?;
            Ok(tensor::mse_loss(&out.detach(), &set.frames[i])?.item() as f64)
        })
        .collect()
}

fn summarize(epoch: usize, losses: &[f64]) -> EpochLog {
    let n = losses.len() as f64;
    EpochLog {
        epoch,
        loss: losses.iter().sum::<f64>() / n,
        psnr: losses.iter().map(|&m| psnr_from_mse(m, 1.0)).sum::<f64>() / n,
    }
}

/// Trains `model` in place on `set`. `on_epoch` sees each log entry as it is
/// produced (entry 0 first).
pub fn train(
    model: Model<f32>,
    set: &TrainingSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutput> {
    config.validate()?;
    if set.is_empty() {
        return Err(TrainError::InvalidConfig("no frames".into()));
    }
    if model.config.variant == Variant::Residual && set.bases.is_none() {
        return Err(TrainError::InvalidConfig("residual training needs low-res bases".into()));
    }
    let params = model.params();
    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut states: Vec<AdamState<f32>> = params.iter().map(|p| AdamState::new(p, adam)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let total = config.epochs * set.len();

    let initial = summarize(0, &frame_losses(&model, set)?);
    if !initial.loss.is_finite() {
        return Err(TrainError::Diverged { epoch: 0, loss: initial.loss });
    }
    on_epoch(&initial);
    let mut log = vec![initial];

    let mut step = 0usize;
    let mut losses = Vec::with_capacity(set.len());
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        losses.clear();
        for &i in &order {
            let lr = lr_at(step, total, config.lr, config.warmup);
            for s in &mut states {
                s.config.lr = lr;
            }
            model.zero_grad();
            let out = model.forward(&set.frames[i], set.base(i))?;
            let loss = tensor::mse_loss(&out, &set.frames[i])?;
            let value = loss.item() as f64;
            if !value.is_finite() {
                return Err(TrainError::Diverged { epoch, loss: value });
            }
            tensor::backward(&loss)?;
            tensor::adam_step(&params, &mut states)?;
            losses.push(value);
            step += 1;
        }
        let entry = summarize(epoch, &losses);
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutput { model, log })
}

/// Encoder output for every frame.
pub fn features(model: &Model<f32>, frames: &[Tensor<f32>]) -> Result<Vec<Tensor<f32>>> {
    frames
        .iter()
        .map(|f| Ok(model.encoder_forward(&f.detach())?.detach()))
        .collect()
}

/// Clamped reconstructions from the training-time model (unquantized).
pub fn reconstruct(model: &Model<f32>, set: &TrainingSet) -> Result<Vec<Tensor<f32>>> {
    (0..set.len())
        .map(|i| {
            let out = model.forward(&set.frames[i].detach(), set.base(i))?;
            Ok(residual::clamp_unit(&out.detach()))
        })
        .collect()
}
