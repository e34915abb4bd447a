//! Two-phase masked-training protocol.
//!
//! Phase one trains a pre-mask network whose square input kernel is
//! L1-penalized; the column L2 norms of that kernel form the mask
//! vector, one nonnegative signal-strength score per input. The scores
//! are binarized over a grid of thresholds; for each threshold the
//! network is fine-tuned in mask mode (inputs below the threshold gated
//! out, plain MSE objective) and the threshold with the lowest final
//! training loss is selected.

mod train;

pub use train::{
    dataset_mse, select_best, sweep_thresholds, train_mask, train_premask, sweep_run_seed,
    SweepRecord, SweepResult, SweepRunStats, TrainedNetwork, TrainingConfig,
};

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::nn::{Mode, Network, NnError};

#[derive(Debug, Error)]
pub enum MaskingError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error("degenerate threshold grid: p70 = {p70:e} <= 1e-4 (all signals tiny)")]
    DegenerateGrid { p70: f64 },
    #[error("mask vector must be nonempty")]
    EmptyMaskVector,
    #[error("mask vector entries must be finite and nonnegative, got {value} at {index}")]
    InvalidMaskValue { index: usize, value: f64 },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("sweep has no successful records")]
    EmptySweep,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("mask file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("mask file parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Raw mask vector: column L2 norms of the input kernel, one per input.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVector {
    values: Vec<f64>,
}

impl MaskVector {
    pub fn new(values: Vec<f64>) -> Result<MaskVector, MaskingError> {
        if values.is_empty() {
            return Err(MaskingError::EmptyMaskVector);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(MaskingError::InvalidMaskValue { index, value });
            }
        }
        Ok(MaskVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Thresholded 0/1 mask. Bit `j` is set iff the mask-vector value `j`
/// was greater than or equal to the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    bits: Vec<bool>,
    threshold: f64,
}

impl BinaryMask {
    pub fn new(bits: Vec<bool>, threshold: f64) -> BinaryMask {
        BinaryMask { bits, threshold }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn selected_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j))
            .collect()
    }
}

/// Column L2 norms of the pre-mask input kernel (bias excluded).
pub fn extract_mask_vector(net: &Network) -> Result<MaskVector, MaskingError> {
    let kernel = net.input_kernel().ok_or(NnError::ModeMismatch {
        required: Mode::PreMask,
        actual: net.mode(),
    })?;
    let w = kernel.weights();
    MaskVector::new((0..w.cols()).map(|j| w.col_norm(j)).collect())
}

/// Binarize over a threshold: values `>= t` keep their input.
pub fn binarize(m: &MaskVector, t: f64) -> BinaryMask {
    assert!(t >= 0.0, "threshold must be nonnegative");
    BinaryMask {
        bits: m.values.iter().map(|&v| v >= t).collect(),
        threshold: t,
    }
}

/// Linear-interpolation percentile (the `v[h_floor] + frac * (v[h_floor+1]
/// - v[h_floor])` convention with `h = q/100 * (n - 1)` over the
/// ascending order statistics).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    assert!((0.0..=100.0).contains(&q));
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("mask values are finite"));
    let h = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

const GRID_LOWER: f64 = 1e-4;

/// Candidate thresholds in `[1e-4, p70)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    thresholds: Vec<f64>,
    p70: f64,
    requested: usize,
}

impl ThresholdGrid {
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn p70(&self) -> f64 {
        self.p70
    }

    /// Grid size asked for; the effective size can be smaller after
    /// 4-decimal rounding collapses duplicates.
    pub fn requested(&self) -> usize {
        self.requested
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Build the threshold grid: `n` points evenly spaced over
/// `[1e-4, p70)` (left-closed linspace, exclusive right end), each
/// rounded to four decimal places, duplicates collapsed, and anything
/// rounding outside the interval dropped. `p70` is the 70th percentile
/// of the mask-vector values; `p70 <= 1e-4` is the degenerate
/// all-signals-tiny case and is reported as an error.
pub fn build_threshold_grid(m: &MaskVector, n: usize) -> Result<ThresholdGrid, MaskingError> {
    assert!(n >= 1, "grid needs at least one point");
    if m.is_empty() {
        return Err(MaskingError::EmptyMaskVector);
    }
    let p70 = percentile(m.values(), 70.0);
    if p70 <= GRID_LOWER {
        return Err(MaskingError::DegenerateGrid { p70 });
    }
    let step = (p70 - GRID_LOWER) / n as f64;
    let mut thresholds = Vec::with_capacity(n);
    for i in 0..n {
        let t = round4(GRID_LOWER + i as f64 * step);
        if t < GRID_LOWER || t >= p70 {
            continue;
        }
        if thresholds.last() != Some(&t) {
            thresholds.push(t);
        }
    }
    Ok(ThresholdGrid {
        thresholds,
        p70,
        requested: n,
    })
}

/// Mask artifact text format: line 1 the input count, line 2 the
/// threshold, then one `raw_value bit` pair per input.
pub fn write_mask_file(path: &Path, m: &MaskVector, mask: &BinaryMask) -> Result<(), MaskingError> {
    assert_eq!(m.len(), mask.len(), "vector and mask lengths must agree");
    let mut text = String::new();
    writeln!(text, "{}", m.len()).expect("string write");
    writeln!(text, "{}", mask.threshold()).expect("string write");
    for (value, &bit) in m.values().iter().zip(mask.bits()) {
        writeln!(text, "{} {}", value, bit as u8).expect("string write");
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Read a mask artifact back.
pub fn read_mask_file(path: &Path) -> Result<(MaskVector, BinaryMask), MaskingError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, message: String| MaskingError::Parse { line, message };

    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let d: usize = first
        .trim()
        .parse()
        .map_err(|_| parse_err(1, format!("'{first}' is not a count")))?;
    let (_, second) = lines
        .next()
        .ok_or_else(|| parse_err(2, "missing threshold line".into()))?;
    let threshold: f64 = second
        .trim()
        .parse()
        .map_err(|_| parse_err(2, format!("'{second}' is not a threshold")))?;

    let mut values = Vec::with_capacity(d);
    let mut bits = Vec::with_capacity(d);
    for (index, line) in lines {
        let lineno = index + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (raw, bit) = line
            .split_once(' ')
            .ok_or_else(|| parse_err(lineno, format!("expected 'value bit', got '{line}'")))?;
        values.push(
            raw.parse::<f64>()
                .map_err(|_| parse_err(lineno, format!("'{raw}' is not a number")))?,
        );
        bits.push(match bit.trim() {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(lineno, format!("bit must be 0 or 1, got '{other}'"))),
        });
    }
    if values.len() != d {
        return Err(parse_err(
            2 + values.len(),
            format!("expected {d} value lines, found {}", values.len()),
        ));
    }
    Ok((MaskVector::new(values)?, BinaryMask::new(bits, threshold)))
}
