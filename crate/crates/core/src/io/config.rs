//! Flat `key = value` run configuration.
//!
//! Every key is optional; missing keys take the defaults below and unknown
//! keys are rejected. When `seed` is absent it comes from the `FOLDGAN_SEED`
//! environment variable, or 42.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loadsim::SimConfig;
use crate::tstr::{ClassifierConfig, GeneratorSource, TstrConfig};
use crate::wgan::{GanArch, GanTrainConfig};

pub const SEED_ENV: &str = "FOLDGAN_SEED";
pub const DEFAULT_SEED: u64 = 42;
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub real_data: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,

    pub sim_rows: usize,
    pub sim_cols: usize,
    pub sim_n_households: usize,
    pub sim_pool_fraction: f64,
    pub sim_base_mean: f64,
    pub sim_noise_sigma: f64,
    pub sim_peak_morning: usize,
    pub sim_peak_evening: usize,
    pub sim_peak_amplitude: f64,
    pub sim_peak_width: f64,
    pub sim_scale_sigma: f64,
    pub sim_pump_amplitude: f64,
    pub sim_pump_row_start: usize,
    pub sim_pump_row_end: usize,
    pub sim_pump_col_start: usize,
    pub sim_pump_col_end: usize,
    pub sim_pump_duty: f64,
    pub sim_label_noise: f64,

    pub gan_latent_dim: usize,
    pub gan_leak: f64,
    pub gan_lr: f64,
    pub gan_lr_decay: f64,
    pub gan_batch_size: usize,
    pub gan_epochs: usize,
    pub gan_lambda_gp: f64,
    pub gan_n_critic: usize,
    pub gan_beta1: f64,
    pub gan_beta2: f64,

    pub clf_epochs: usize,
    pub clf_batch_size: usize,
    pub clf_lr: f64,
    pub clf_beta1: f64,
    pub clf_beta2: f64,

    pub n_trials: usize,
    pub n_generated_per_class: usize,
    pub gan_train_ratio: f64,
    pub renormalize_generated: bool,
    pub source: GeneratorSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let arch = GanArch::new(sim.rows, sim.cols);
        let gan = GanTrainConfig::default();
        let clf = ClassifierConfig::default();
        let tstr = TstrConfig::default();
        Self {
            seed: None,
            real_data: None,
            out_dir: None,
            sim_rows: sim.rows,
            sim_cols: sim.cols,
            sim_n_households: sim.n_households,
            sim_pool_fraction: sim.pool_fraction,
            sim_base_mean: sim.base_mean,
            sim_noise_sigma: sim.noise_sigma,
            sim_peak_morning: sim.peak_hours.0,
            sim_peak_evening: sim.peak_hours.1,
            sim_peak_amplitude: sim.peak_amplitude,
            sim_peak_width: sim.peak_width,
            sim_scale_sigma: sim.scale_sigma,
            sim_pump_amplitude: sim.pump_amplitude,
            sim_pump_row_start: sim.pump_daily_window.0,
            sim_pump_row_end: sim.pump_daily_window.1,
            sim_pump_col_start: sim.pump_season_window.0,
            sim_pump_col_end: sim.pump_season_window.1,
            sim_pump_duty: sim.pump_duty,
            sim_label_noise: sim.label_noise,
            gan_latent_dim: arch.latent_dim,
            gan_leak: arch.leak,
            gan_lr: gan.lr,
            gan_lr_decay: gan.lr_decay,
            gan_batch_size: gan.batch_size,
            gan_epochs: gan.epochs,
            gan_lambda_gp: gan.lambda_gp,
            gan_n_critic: gan.n_critic,
            gan_beta1: gan.beta1,
            gan_beta2: gan.beta2,
            clf_epochs: clf.epochs,
            clf_batch_size: clf.batch_size,
            clf_lr: clf.lr,
            clf_beta1: clf.beta1,
            clf_beta2: clf.beta2,
            n_trials: tstr.n_trials,
            n_generated_per_class: tstr.n_generated_per_class,
            gan_train_ratio: tstr.gan_train_ratio,
            renormalize_generated: tstr.renormalize_generated,
            source: tstr.source,
        }
    }
}

/// Seed used when a config does not name one.
pub fn default_seed() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_SEED),
        Err(e) => Err(Error::Config(format!("{SEED_ENV}: {e}"))),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills the seed and checks every section.
    pub fn resolved(mut self) -> Result<Self> {
        if self.seed.is_none() {
            self.seed = Some(default_seed()?);
        }
        self.sim().validate()?;
        self.gan().validate()?;
        self.tstr().validate()?;
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            rows: self.sim_rows,
            cols: self.sim_cols,
            n_households: self.sim_n_households,
            pool_fraction: self.sim_pool_fraction,
            base_mean: self.sim_base_mean,
            noise_sigma: self.sim_noise_sigma,
            peak_hours: (self.sim_peak_morning, self.sim_peak_evening),
            peak_amplitude: self.sim_peak_amplitude,
            peak_width: self.sim_peak_width,
            scale_sigma: self.sim_scale_sigma,
            pump_amplitude: self.sim_pump_amplitude,
            pump_daily_window: (self.sim_pump_row_start, self.sim_pump_row_end),
            pump_season_window: (self.sim_pump_col_start, self.sim_pump_col_end),
            pump_duty: self.sim_pump_duty,
            label_noise: self.sim_label_noise,
            seed: self.seed(),
        }
    }

    pub fn arch(&self, rows: usize, cols: usize) -> GanArch {
        GanArch {
            latent_dim: self.gan_latent_dim,
            rows,
            cols,
            leak: self.gan_leak,
        }
    }

    pub fn gan(&self) -> GanTrainConfig {
        GanTrainConfig {
            lr: self.gan_lr,
            lr_decay: self.gan_lr_decay,
            batch_size: self.gan_batch_size,
            epochs: self.gan_epochs,
            lambda_gp: self.gan_lambda_gp,
            n_critic: self.gan_n_critic,
            beta1: self.gan_beta1,
            beta2: self.gan_beta2,
            seed: self.seed(),
        }
    }

    pub fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig {
            epochs: self.clf_epochs,
            batch_size: self.clf_batch_size,
            lr: self.clf_lr,
            beta1: self.clf_beta1,
            beta2: self.clf_beta2,
        }
    }

    pub fn tstr(&self) -> TstrConfig {
        TstrConfig {
            n_trials: self.n_trials,
            n_generated_per_class: self.n_generated_per_class,
            gan_train_ratio: self.gan_train_ratio,
            renormalize_generated: self.renormalize_generated,
            latent_dim: self.gan_latent_dim,
            gan: self.gan(),
            classifier: self.classifier(),
            source: self.source,
            seed: self.seed(),
        }
    }

    /// Writes the configuration to `dir/effective_config.toml`.
    pub fn echo_to(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let path = dir.as_ref().join(EFFECTIVE_CONFIG_FILE);
        std::fs::write(&path, self.to_toml_string()?)?;
        Ok(path)
    }
}
