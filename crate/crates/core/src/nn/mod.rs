//! Dense-network engine: forward pass, reverse-mode gradients, losses,
//! Adam, learning-rate schedule, and checkpoint I/O.
//!
//! The engine is deliberately small: a fixed feed-forward topology of
//! dense layers with either a square linear input kernel (pre-mask mode)
//! or an element-wise input gate (mask mode) in front, a stack of hidden
//! layers, and a scalar linear readout. Everything runs in `f64` and is
//! single-threaded, so fixed seeds give bitwise-identical trajectories.

mod activation;
mod adam;
mod checkpoint;
mod layer;
mod loss;
mod network;
mod schedule;

pub use activation::{leaky_relu, Activation};
pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use layer::DenseLayer;
pub use loss::{backward, loss_mask, loss_premask, Gradients, LayerGrads, LossBreakdown};
pub use network::{Mode, Network, NetworkArch};
pub use schedule::LrSchedule;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: usize },
    #[error("operation requires {required:?} mode but network is in {actual:?} mode")]
    ModeMismatch { required: Mode, actual: Mode },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),
}
