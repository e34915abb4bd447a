use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{DataError, DatasetSchema, ScalingMode};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, stream, Rng};

/// Which split a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

/// Per-input standardization statistics (fitted on the train split) and
/// the output normalization constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub output_scale: f64,
}

/// Tabular dataset: schema, sample matrix, target vector, optional split
/// label, optional scaler (set once standardized), and the ground-truth
/// driver set when the data came from a synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: DatasetSchema,
    x: Matrix,
    y: Vec<f64>,
    split: Option<SplitKind>,
    scaler: Option<ScalerStats>,
    truth_drivers: Option<BTreeSet<usize>>,
}

impl Dataset {
    pub fn new(
        schema: DatasetSchema,
        x: Matrix,
        y: Vec<f64>,
        split: Option<SplitKind>,
        scaler: Option<ScalerStats>,
        truth_drivers: Option<BTreeSet<usize>>,
    ) -> Result<Dataset, DataError> {
        if x.cols() != schema.input_dim() {
            return Err(DataError::Shape(format!(
                "matrix has {} columns but schema names {} inputs",
                x.cols(),
                schema.input_dim()
            )));
        }
        if x.rows() != y.len() {
            return Err(DataError::Shape(format!(
                "{} sample rows but {} targets",
                x.rows(),
                y.len()
            )));
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Shape(format!("non-finite target at row {pos}")));
        }
        if let Some(t) = &truth_drivers {
            if t.iter().any(|&j| j >= schema.input_dim()) {
                return Err(DataError::Shape(
                    "truth driver index out of range".into(),
                ));
            }
        }
        Ok(Dataset {
            schema,
            x,
            y,
            split,
            scaler,
            truth_drivers,
        })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn split(&self) -> Option<SplitKind> {
        self.split
    }

    pub fn scaler(&self) -> Option<&ScalerStats> {
        self.scaler.as_ref()
    }

    pub fn truth_drivers(&self) -> Option<&BTreeSet<usize>> {
        self.truth_drivers.as_ref()
    }

    pub(crate) fn with_parts(
        &self,
        x: Matrix,
        y: Vec<f64>,
        split: Option<SplitKind>,
        scaler: Option<ScalerStats>,
    ) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            x,
            y,
            split,
            scaler: scaler.clone(),
            truth_drivers: self.truth_drivers.clone(),
        }
    }
}

/// Fit standardization statistics. Only the train split (or unsplit
/// data) may be used; population standard deviation (divide by N).
/// With `ScalingMode::None` the input statistics are identity and only
/// the output constant applies.
pub fn fit_scaler(train: &Dataset) -> Result<ScalerStats, DataError> {
    if matches!(train.split(), Some(SplitKind::Val) | Some(SplitKind::Test)) {
        return Err(DataError::Split(
            "scaler must be fitted on the train split".into(),
        ));
    }
    if train.is_empty() {
        return Err(DataError::Split("cannot fit a scaler on zero rows".into()));
    }
    let d = train.input_dim();
    let n = train.len() as f64;
    let (mut mean, mut std) = (vec![0.0; d], vec![1.0; d]);
    if train.schema().input_scaling == ScalingMode::Standardize {
        for j in 0..d {
            let mut sum = 0.0;
            for r in 0..train.len() {
                sum += train.x().get(r, j);
            }
            mean[j] = sum / n;
        }
        for j in 0..d {
            let mut ss = 0.0;
            for r in 0..train.len() {
                let delta = train.x().get(r, j) - mean[j];
                ss += delta * delta;
            }
            let sd = (ss / n).sqrt();
            if sd <= 0.0 {
                return Err(DataError::ZeroVariance {
                    name: train.schema().input_names[j].clone(),
                });
            }
            std[j] = sd;
        }
    }
    Ok(ScalerStats {
        mean,
        std,
        output_scale: train.schema().output_norm_constant,
    })
}

impl ScalerStats {
    /// Standardize inputs with the stored statistics and divide the
    /// output by the normalization constant. Always uses the stored
    /// statistics; never refits.
    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset, DataError> {
        if self.mean.len() != dataset.input_dim() {
            return Err(DataError::Shape(format!(
                "scaler has {} columns, dataset {}",
                self.mean.len(),
                dataset.input_dim()
            )));
        }
        let mut x = dataset.x().clone();
        for r in 0..x.rows() {
            let row = x.row_mut(r);
            for j in 0..row.len() {
                row[j] = (row[j] - self.mean[j]) / self.std[j];
            }
        }
        let y = dataset.y().iter().map(|v| v / self.output_scale).collect();
        Ok(dataset.with_parts(x, y, dataset.split(), Some(self.clone())))
    }

    /// Inverse of [`Self::apply`].
    pub fn invert(&self, dataset: &Dataset) -> Result<Dataset, DataError> {
        if self.mean.len() != dataset.input_dim() {
            return Err(DataError::Shape(format!(
                "scaler has {} columns, dataset {}",
                self.mean.len(),
                dataset.input_dim()
            )));
        }
        let mut x = dataset.x().clone();
        for r in 0..x.rows() {
            let row = x.row_mut(r);
            for j in 0..row.len() {
                row[j] = row[j] * self.std[j] + self.mean[j];
            }
        }
        let y = dataset.y().iter().map(|v| v * self.output_scale).collect();
        Ok(dataset.with_parts(x, y, dataset.split(), None))
    }

    /// Map a normalized prediction back to output units.
    pub fn prediction_to_output_units(&self, prediction: f64) -> f64 {
        prediction * self.output_scale
    }
}

/// Shuffle all rows with a seed-derived permutation and partition into
/// train/val/test by the given fractions (must sum to 1). A fraction of
/// exactly zero yields an empty split; a positive fraction that rounds
/// to zero rows is an error.
pub fn shuffle_and_split(
    raw: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset), DataError> {
    let (f_train, f_val, f_test) = fractions;
    for f in [f_train, f_val, f_test] {
        if !(0.0..=1.0).contains(&f) {
            return Err(DataError::Split(format!("fraction {f} outside [0, 1]")));
        }
    }
    if ((f_train + f_val + f_test) - 1.0).abs() > 1e-9 {
        return Err(DataError::Split(format!(
            "fractions sum to {}, expected 1",
            f_train + f_val + f_test
        )));
    }
    let n = raw.len();
    if n == 0 {
        return Err(DataError::Split("cannot split zero rows".into()));
    }
    let n_train = ((f_train * n as f64).round() as usize).min(n);
    let n_val = ((f_val * n as f64).round() as usize).min(n - n_train);
    let n_test = n - n_train - n_val;
    for (count, fraction, name) in [
        (n_train, f_train, "train"),
        (n_val, f_val, "val"),
        (n_test, f_test, "test"),
    ] {
        if fraction > 0.0 && count == 0 {
            return Err(DataError::Split(format!(
                "{name} split is empty ({n} rows, fraction {fraction})"
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    Rng::for_stream(seed, stream::SPLIT).shuffle(&mut order);

    let build = |range: std::ops::Range<usize>, kind: SplitKind| {
        let indices = &order[range];
        let x = raw.x().select_rows(indices);
        let y = indices.iter().map(|&i| raw.y()[i]).collect();
        raw.with_parts(x, y, Some(kind), raw.scaler.clone())
    };
    Ok((
        build(0..n_train, SplitKind::Train),
        build(n_train..n_train + n_val, SplitKind::Val),
        build(n_train + n_val..n, SplitKind::Test),
    ))
}

/// Mini-batches for one epoch: covers every row exactly once, the last
/// batch may be short, and the order comes from a per-epoch stream
/// `derive(derive(base_seed, EPOCH_SHUFFLE), epoch)`, so epochs differ
/// but any (seed, epoch) pair is reproducible.
pub fn epoch_batches<'d>(
    dataset: &'d Dataset,
    batch_size: usize,
    base_seed: u64,
    epoch: usize,
) -> BatchIter<'d> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let seed = derive_seed(derive_seed(base_seed, stream::EPOCH_SHUFFLE), epoch as u64);
    Rng::new(seed).shuffle(&mut order);
    BatchIter {
        dataset,
        order,
        batch_size,
        next: 0,
    }
}

/// Sequential batches in stored order (for evaluation).
pub fn eval_batches<'d>(dataset: &'d Dataset, batch_size: usize) -> BatchIter<'d> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    BatchIter {
        dataset,
        order: (0..dataset.len()).collect(),
        batch_size,
        next: 0,
    }
}

/// Iterator of `(X_batch, y_batch)` pairs.
pub struct BatchIter<'d> {
    dataset: &'d Dataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = (Matrix, Vec<f64>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let indices = &self.order[self.next..end];
        self.next = end;
        let x = self.dataset.x().select_rows(indices);
        let y = indices.iter().map(|&i| self.dataset.y()[i]).collect();
        Some((x, y))
    }
}
