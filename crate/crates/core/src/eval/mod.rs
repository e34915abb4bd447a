//! Evaluation: predictive-skill metrics, Shapley attribution, driver
//! recovery, and mask comparison.

mod masks;
mod metrics;
mod shapley;

pub use masks::{compare_masks, GroupOverlap, MaskOverlapReport};
pub use metrics::{
    driver_recovery, profile_report, r2, DriverRecoveryReport, ProfileGroup, ProfileReport,
    R2Report,
};
pub use shapley::{
    mean_abs_attribution, shapley_exact, shapley_sampled, AttributionConfig, AttributionEstimator,
    AttributionMatrix, Predictor, ShapleyEstimate,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape: {0}")]
    Shape(String),
    #[error("need at least {required} samples, got {actual}")]
    TooFewSamples { required: usize, actual: usize },
    #[error("exact Shapley enumerates 2^d coalitions and supports d <= {max}, got d = {d}; use the sampled estimator")]
    TooManyFeatures { max: usize, d: usize },
    #[error("background set must be nonempty")]
    EmptyBackground,
    #[error("model: {0}")]
    Model(String),
}
