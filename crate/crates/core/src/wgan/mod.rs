//! Per-class Wasserstein GAN with gradient penalty on heatmaps.
//!
//! The generator projects a latent vector to 128 channels at one eighth of
//! the heatmap size and upsamples with three stride-2 transposed
//! convolutions (64, 32, 1 channels). The critic mirrors it with three
//! stride-2 convolutions (32, 64, 128 channels), a 1024-unit dense layer and
//! a single linear output unit.

mod penalty;
mod train;

pub use penalty::{gradient_penalty, gradient_penalty_at, input_gradients, PenaltyOutput};
pub use train::{
    critic_loss_grads, critic_step, generator_loss_grads, generator_step, sample, train_wgan,
    train_wgan_with, CriticStep, EpochLog, TrainFailure, TrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folding::ClassLabel;
use crate::nn::{AdamState, Conv2d, Dense, Layer, Network, Padding, TConv2d, BatchNorm};
use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

pub const KERNEL: usize = 5;
pub const STRIDE: usize = 2;
/// Channels of the projected latent map feeding the first upsampling.
pub const GEN_BASE_CHANNELS: usize = 128;
pub const GEN_CHANNELS: [usize; 3] = [64, 32, 1];
pub const CRITIC_CHANNELS: [usize; 3] = [32, 64, 128];
pub const CRITIC_HIDDEN: usize = 1024;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanArch {
    pub latent_dim: usize,
    pub rows: usize,
    pub cols: usize,
    pub leak: f64,
}

impl GanArch {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            latent_dim: 128,
            rows,
            cols,
            leak: crate::nn::layer::DEFAULT_LEAK,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.rows % 8 != 0 || self.cols % 8 != 0 {
            return Err(Error::Shape(format!(
                "heatmap {}×{} is not divisible by 8 in both dimensions; pad or crop it \
                 (three stride-2 layers need multiples of 8)",
                self.rows, self.cols
            )));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        Ok(())
    }

    /// Spatial size after the critic's three stride-2 convolutions.
    pub fn bottleneck(&self) -> (usize, usize) {
        (self.rows / 8, self.cols / 8)
    }

    /// Critic flatten width: `128 · (P/8) · (D/8)`.
    pub fn flatten_len(&self) -> usize {
        let (h, w) = self.bottleneck();
        CRITIC_CHANNELS[2] * h * w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanTrainConfig {
    pub lr: f64,
    /// Factor applied once to both learning rates at epoch `epochs / 2`.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_gp: f64,
    pub n_critic: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            lr_decay: 0.5,
            batch_size: 4,
            epochs: 220,
            lambda_gp: 10.0,
            n_critic: 5,
            beta1: 0.5,
            beta2: 0.9,
            seed: 0,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr_decay > 0.0) {
            return Err(Error::Config("lr and lr_decay must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch_size must be at least 2 (generator batch norm)".into(),
            ));
        }
        if self.n_critic == 0 {
            return Err(Error::Config("n_critic must be at least 1".into()));
        }
        if !(self.lambda_gp >= 0.0) {
            return Err(Error::Config(format!("lambda_gp {} must be ≥ 0", self.lambda_gp)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Epoch at which the learning-rate decay fires, if any.
    pub fn decay_epoch(&self) -> Option<usize> {
        (self.epochs >= 2).then_some(self.epochs / 2)
    }
}

pub fn build_generator<T: Scalar>(arch: &GanArch, seed: u64) -> Result<Network<T>> {
    arch.validate()?;
    let mut rng = rng_from_seed(seed);
    let (h, w) = arch.bottleneck();
    let mut layers = vec![
        Layer::Dense(Dense::new(arch.latent_dim, GEN_BASE_CHANNELS * h * w, &mut rng)),
        Layer::Reshape(vec![GEN_BASE_CHANNELS, h, w]),
    ];
    let mut c_in = GEN_BASE_CHANNELS;
    for (i, &c_out) in GEN_CHANNELS.iter().enumerate() {
        layers.push(Layer::TConv2d(TConv2d::new(c_in, c_out, KERNEL, STRIDE, Padding::Same, &mut rng)));
        if i + 1 < GEN_CHANNELS.len() {
            layers.push(Layer::BatchNorm(BatchNorm::new(c_out)));
            layers.push(Layer::leaky_relu(arch.leak));
        } else {
            layers.push(Layer::Sigmoid);
        }
        c_in = c_out;
    }
    Ok(Network::new(layers))
}

pub fn build_critic<T: Scalar>(arch: &GanArch, seed: u64) -> Result<Network<T>> {
    arch.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut layers = Vec::new();
    let mut c_in = 1;
    for &c_out in &CRITIC_CHANNELS {
        layers.push(Layer::Conv2d(Conv2d::new(c_in, c_out, KERNEL, STRIDE, Padding::Same, &mut rng)));
        layers.push(Layer::leaky_relu(arch.leak));
        c_in = c_out;
    }
    layers.push(Layer::Flatten);
    layers.push(Layer::Dense(Dense::new(arch.flatten_len(), CRITIC_HIDDEN, &mut rng)));
    layers.push(Layer::leaky_relu(arch.leak));
    // Linear score: no output transfer function.
    layers.push(Layer::Dense(Dense::new(CRITIC_HIDDEN, 1, &mut rng)));
    Ok(Network::new(layers))
}

/// Critic and optimizer state needed to resume training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingState<T> {
    pub critic: Network<T>,
    pub critic_opt: AdamState<T>,
    pub gen_opt: AdamState<T>,
}

/// Snapshot of one class's GAN.
#[derive(Clone, Debug, PartialEq)]
pub struct GanCheckpoint<T> {
    pub format_version: u32,
    pub arch: GanArch,
    pub generator: Network<T>,
    pub training: Option<TrainingState<T>>,
    pub class_label: ClassLabel,
    pub epochs_completed: u32,
    pub seed: u64,
}

impl<T: Scalar> GanCheckpoint<T> {
    /// Freshly initialised generator, critic and optimizers.
    pub fn init(arch: GanArch, cfg: &GanTrainConfig, class_label: ClassLabel) -> Result<Self> {
        use crate::seed::derive_seed;
        let generator = build_generator::<T>(&arch, derive_seed(cfg.seed, 1))?;
        let critic = build_critic::<T>(&arch, derive_seed(cfg.seed, 2))?;
        let gen_opt = AdamState::new(&generator.params(), cfg.lr, cfg.beta1, cfg.beta2);
        let critic_opt = AdamState::new(&critic.params(), cfg.lr, cfg.beta1, cfg.beta2);
        Ok(Self {
            format_version: CHECKPOINT_VERSION,
            arch,
            generator,
            training: Some(TrainingState {
                critic,
                critic_opt,
                gen_opt,
            }),
            class_label,
            epochs_completed: 0,
            seed: cfg.seed,
        })
    }

    /// Drops the critic and optimizer state.
    pub fn generator_only(mut self) -> Self {
        self.training = None;
        self
    }
}
