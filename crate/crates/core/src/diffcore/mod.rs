//! Minimal differentiable core: dense layers, activations, the clamped
//! cross-entropy, an adaptive optimizer and a checkpoint container.

mod activation;
mod checkpoint;
mod dense;
mod optim;

pub use activation::{ce_loss, ce_with_logit, sigmoid, softplus, Activation, PROB_CLAMP};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use dense::{Dense, DenseNet, Gradients, Tape};
pub use optim::{Optimizer, OptimizerKind};
