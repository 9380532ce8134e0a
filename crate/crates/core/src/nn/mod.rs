//! Minimal differentiable core: tensors, layers, losses, Adam and gradient
//! checking.

pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod network;
pub mod tensor;

pub use adam::AdamState;
pub use conv::Padding;
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use layer::{BatchNorm, Conv2d, Dense, Layer, Mode, TConv2d};
pub use loss::{xent_loss, XentLoss};
pub use network::{accumulate, Backward, Network, Tape};
pub use tensor::Tensor;
