use crate::matrix::{axpy, Matrix};
use crate::nn::{Activation, NnError};
use crate::rng::Rng;

use super::loss::LayerGrads;

/// Dense affine layer `a = activation(W x + b)` with `W` stored row-major
/// as (out x in): row `o` is the fan-in of output unit `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self, NnError> {
        if bias.len() != weights.rows() {
            return Err(NnError::InvalidNetwork(format!(
                "bias length {} does not match weight rows {}",
                bias.len(),
                weights.rows()
            )));
        }
        activation.validate().map_err(NnError::InvalidNetwork)?;
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(NnError::InvalidNetwork("non-finite bias entry".into()));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights (`limit = sqrt(6 / (fan_in + fan_out))`,
    /// drawn row-major), zero biases. Draw order is part of the
    /// determinism contract.
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut weights = Matrix::zeros(out_dim, in_dim);
        for w in weights.values_mut() {
            *w = rng.uniform(-limit, limit);
        }
        DenseLayer {
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        self.weights.values().len() + self.bias.len()
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Batched forward: rows of `x` are samples. Accumulates along the
    /// input axis with a transposed weight copy so the inner loops run
    /// over contiguous slices.
    pub(crate) fn forward_batch(&self, x: &Matrix) -> Result<Matrix, NnError> {
        if x.cols() != self.in_dim() {
            return Err(NnError::Shape(format!(
                "layer expects {} inputs, batch has {} columns",
                self.in_dim(),
                x.cols()
            )));
        }
        let wt = self.weights.transposed();
        let mut out = Matrix::zeros(x.rows(), self.out_dim());
        for r in 0..x.rows() {
            let row = out.row_mut(r);
            row.copy_from_slice(&self.bias);
            for (i, &xv) in x.row(r).iter().enumerate() {
                axpy(row, xv, wt.row(i));
            }
            self.activation.apply_in_place(row);
        }
        Ok(out)
    }

    /// Batched backward. `x` is the layer input, `a` its forward output,
    /// `d_out` the loss gradient w.r.t. `a`. Parameter gradients are
    /// accumulated into `grads`; returns the gradient w.r.t. `x`.
    pub(crate) fn backward_batch(
        &self,
        x: &Matrix,
        a: &Matrix,
        d_out: &Matrix,
        grads: &mut LayerGrads,
    ) -> Matrix {
        debug_assert_eq!(x.cols(), self.in_dim());
        debug_assert_eq!(a.cols(), self.out_dim());
        debug_assert_eq!(d_out.cols(), self.out_dim());
        let n = x.rows();
        let mut d_x = Matrix::zeros(n, self.in_dim());
        for r in 0..n {
            let x_row = x.row(r);
            let a_row = a.row(r);
            let d_row = d_out.row(r);
            let dx_row = d_x.row_mut(r);
            for o in 0..self.out_dim() {
                let dz = d_row[o] * self.activation.derivative_from_output(a_row[o]);
                if dz == 0.0 {
                    continue;
                }
                grads.bias[o] += dz;
                axpy(grads.weights.row_mut(o), dz, x_row);
                axpy(dx_row, dz, self.weights.row(o));
            }
        }
        d_x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_is_seed_deterministic() {
        let a = DenseLayer::glorot(4, 3, Activation::Linear, &mut Rng::new(1));
        let b = DenseLayer::glorot(4, 3, Activation::Linear, &mut Rng::new(1));
        assert_eq!(a, b);
        assert!(a.bias().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_identity_weights() {
        let layer = DenseLayer::new(Matrix::identity(3), vec![0.0; 3], Activation::Linear).unwrap();
        let x = Matrix::from_values(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        let out = layer.forward_batch(&x).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let layer = DenseLayer::glorot(3, 2, Activation::Linear, &mut Rng::new(0));
        let x = Matrix::zeros(1, 4);
        assert!(matches!(layer.forward_batch(&x), Err(NnError::Shape(_))));
    }

    #[test]
    fn bias_length_validated() {
        let err = DenseLayer::new(Matrix::zeros(2, 3), vec![0.0; 3], Activation::Linear);
        assert!(err.is_err());
    }
}
