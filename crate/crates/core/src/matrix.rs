//! Row-major `f64` matrix.
//!
//! Layout: entry `(r, c)` lives at `values[r * cols + c]`. Rows are
//! contiguous, which keeps per-sample operations (a row is a sample, a
//! layer-weight row is one output unit's fan-in) cache friendly.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("value buffer has {len} entries, expected {rows}x{cols}={expected}")]
    LengthMismatch {
        len: usize,
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("non-finite entry at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    /// Build from a row-major buffer. Fails when the length does not
    /// match `rows * cols` or any entry is non-finite.
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, MatrixError> {
        if values.len() != rows * cols {
            return Err(MatrixError::LengthMismatch {
                len: values.len(),
                rows,
                cols,
                expected: rows * cols,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite {
                row: if cols == 0 { 0 } else { pos / cols },
                col: if cols == 0 { 0 } else { pos % cols },
            });
        }
        Ok(Matrix { rows, cols, values })
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.values[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// Iterator over row slices.
    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols.max(1))
    }

    /// New matrix keeping the rows listed in `indices` (in that order).
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for (i, &r) in indices.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(r));
        }
        out
    }

    /// Transposed copy.
    pub fn transposed(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        out
    }

    /// L2 norm of column `c`.
    pub fn col_norm(&self, c: usize) -> f64 {
        let mut sum = 0.0;
        for r in 0..self.rows {
            let v = self.values[r * self.cols + c];
            sum += v * v;
        }
        sum.sqrt()
    }

    /// Sum of absolute values over all entries.
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// `out[i] += scale * rhs[i]`. The compiler vectorizes this form, so the
/// batched layer kernels are built on it.
#[inline]
pub(crate) fn axpy(out: &mut [f64], scale: f64, rhs: &[f64]) {
    debug_assert_eq!(out.len(), rhs.len());
    for (o, &r) in out.iter_mut().zip(rhs) {
        *o += scale * r;
    }
}
