//! Two-phase masked training for dense regression networks.
//!
//! The library trains a dense regressor in two phases. In the pre-mask
//! phase the inputs pass through a square, L1-penalized input layer; the
//! column norms of that layer's kernel score how strongly each input
//! drives the output. The scores are binarized over a threshold grid,
//! and for every candidate threshold the network is fine-tuned with the
//! masked inputs gated out. The threshold whose fine-tuned network
//! reaches the lowest training loss wins, yielding a model that by
//! construction ignores everything outside the selected driver set.
//!
//! Modules:
//! - [`matrix`]: row-major `f64` matrix used throughout.
//! - [`rng`]: deterministic RNG and seed-stream derivation.
//! - [`nn`]: dense network engine (forward, reverse-mode gradients,
//!   losses, Adam, LR schedule, checkpoints).
//! - [`data`]: dataset schema, scaling, splits, batching, synthetic
//!   generators with known ground-truth drivers, CSV/binary I/O.
//! - [`masking`]: mask extraction, threshold grid, two-phase training,
//!   threshold sweep and selection.
//! - [`eval`]: R²/profile metrics, Shapley attribution, driver-recovery
//!   scoring, mask comparison.

pub mod data;
pub mod eval;
pub mod masking;
pub mod matrix;
pub mod nn;
pub mod rng;

pub use matrix::Matrix;
