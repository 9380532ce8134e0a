//! Generative augmentation of periodic sensor series.
//!
//! Series are folded into period-per-column heatmaps ([`folding`]), a
//! Wasserstein GAN with gradient penalty is trained per class on those
//! heatmaps ([`wgan`]), and generators are scored by training a classifier
//! on generated data only and testing it on real data ([`tstr`]).
//! [`loadsim`] provides seeded synthetic household load data.
//!
//! Numeric code is generic over [`Scalar`] (`f32` for training, `f64` for
//! verification); the aliases below name the common instantiations.

pub mod error;
pub mod folding;
pub mod io;
pub mod loadsim;
pub mod nn;
pub mod scalar;
pub mod seed;
pub mod tstr;
pub mod wgan;

pub use error::{Error, Result};
pub use folding::{fold, kernel_economy, normalize, unfold, ClassLabel, Heatmap, KernelEconomy, LoadSeries};
pub use loadsim::{simulate_dataset, simulate_household, split_dataset, LabelledDataset, SimConfig};
pub use scalar::Scalar;

pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
pub type Heatmap32 = Heatmap<f32>;
pub type Heatmap64 = Heatmap<f64>;
pub type Dataset32 = LabelledDataset<f32>;
pub type Dataset64 = LabelledDataset<f64>;
pub type GanCheckpoint32 = wgan::GanCheckpoint<f32>;
pub type GanCheckpoint64 = wgan::GanCheckpoint<f64>;
