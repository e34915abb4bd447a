//! Datasets: schema, scaling, splits, batch iteration, synthetic
//! generators with known ground-truth drivers, and CSV/binary I/O.

mod dataset;
mod io;
mod schema;
mod synthetic;

pub use dataset::{
    epoch_batches, eval_batches, fit_scaler, shuffle_and_split, Dataset, ScalerStats, SplitKind,
};
pub use io::{
    load_binary, load_csv, load_dataset_auto, read_truth_file, save_binary, save_csv,
    write_truth_file,
};
pub use schema::{DatasetSchema, ScalingMode};
pub use synthetic::{generate_synthetic, sparse_linear_weights, Mechanism, SyntheticSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema: {0}")]
    Schema(String),
    #[error("zero-variance input column '{name}'")]
    ZeroVariance { name: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("split: {0}")]
    Split(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("binary dataset format: {0}")]
    Format(String),
}
