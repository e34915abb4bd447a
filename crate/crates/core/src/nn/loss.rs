use crate::matrix::Matrix;
use crate::nn::{Mode, Network, NnError};

/// Objective value split into its two terms. `total = mse + l1_penalty`
/// with no hidden terms; in mask mode the penalty is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub mse: f64,
    /// Already weighted by lambda and scaled by `1 / d^2`.
    pub l1_penalty: f64,
    pub total: f64,
}

/// Gradient buffers for one dense layer, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LayerGrads {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        LayerGrads {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }
}

/// Gradients for every trainable tensor of a network, in declared order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub input_kernel: Option<LayerGrads>,
    pub hidden: Vec<LayerGrads>,
    pub output: LayerGrads,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Gradients {
        Gradients {
            input_kernel: net
                .input_kernel()
                .map(|k| LayerGrads::zeros(k.out_dim(), k.in_dim())),
            hidden: net
                .hidden_layers()
                .iter()
                .map(|l| LayerGrads::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            output: LayerGrads::zeros(net.output_layer().out_dim(), net.output_layer().in_dim()),
        }
    }

    /// Flat tensors in the same order as `Network::param_tensors_mut`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut tensors = Vec::new();
        if let Some(k) = &self.input_kernel {
            tensors.push(k.weights.values());
            tensors.push(k.bias.as_slice());
        }
        for l in &self.hidden {
            tensors.push(l.weights.values());
            tensors.push(l.bias.as_slice());
        }
        tensors.push(self.output.weights.values());
        tensors.push(self.output.bias.as_slice());
        tensors
    }

    fn stages_mut(&mut self) -> Vec<&mut LayerGrads> {
        let mut stages = Vec::new();
        if let Some(k) = &mut self.input_kernel {
            stages.push(k);
        }
        stages.extend(self.hidden.iter_mut());
        stages.push(&mut self.output);
        stages
    }
}

fn check_targets(batch: &Matrix, targets: &[f64]) -> Result<(), NnError> {
    if targets.len() != batch.rows() {
        return Err(NnError::Shape(format!(
            "{} targets for {} batch rows",
            targets.len(),
            batch.rows()
        )));
    }
    Ok(())
}

fn mse(predictions: &[f64], targets: &[f64]) -> f64 {
    let n = predictions.len().max(1) as f64;
    predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (y - p) * (y - p))
        .sum::<f64>()
        / n
}

fn require_mode(net: &Network, required: Mode) -> Result<(), NnError> {
    if net.mode() != required {
        return Err(NnError::ModeMismatch {
            required,
            actual: net.mode(),
        });
    }
    Ok(())
}

/// Pre-mask penalty: `lambda * ||vec(W1)||_1 / d^2`, kernel bias excluded.
fn kernel_penalty(net: &Network, lambda: f64) -> f64 {
    let kernel = net.input_kernel().expect("pre-mask network has a kernel");
    let d = kernel.in_dim() as f64;
    lambda * kernel.weights().l1_norm() / (d * d)
}

/// Pre-mask objective: mean squared error plus the scaled entry-wise L1
/// norm of the input kernel.
pub fn loss_premask(
    net: &Network,
    batch: &Matrix,
    targets: &[f64],
    lambda: f64,
) -> Result<LossBreakdown, NnError> {
    require_mode(net, Mode::PreMask)?;
    check_targets(batch, targets)?;
    let predictions = net.forward(batch)?;
    let mse = mse(&predictions, targets);
    let l1_penalty = kernel_penalty(net, lambda);
    Ok(LossBreakdown {
        mse,
        l1_penalty,
        total: mse + l1_penalty,
    })
}

/// Mask-mode objective: mean squared error only.
pub fn loss_mask(net: &Network, batch: &Matrix, targets: &[f64]) -> Result<LossBreakdown, NnError> {
    require_mode(net, Mode::Mask)?;
    check_targets(batch, targets)?;
    let predictions = net.forward(batch)?;
    let mse = mse(&predictions, targets);
    Ok(LossBreakdown {
        mse,
        l1_penalty: 0.0,
        total: mse,
    })
}

/// Reverse-mode gradients of the objective w.r.t. every trainable
/// parameter. In pre-mask mode `lambda` weights the kernel L1 term (the
/// subgradient of `|w|` at exactly 0 is taken as 0); in mask mode
/// `lambda` must be 0.
pub fn backward(
    net: &Network,
    batch: &Matrix,
    targets: &[f64],
    lambda: f64,
) -> Result<(LossBreakdown, Gradients), NnError> {
    if net.mode() == Mode::Mask && lambda != 0.0 {
        return Err(NnError::ModeMismatch {
            required: Mode::PreMask,
            actual: Mode::Mask,
        });
    }
    check_targets(batch, targets)?;

    let trace = net.forward_trace(batch)?;
    let predictions = trace
        .stage_outputs
        .last()
        .expect("trace has the output stage");
    let n = batch.rows().max(1) as f64;

    let mse = mse(predictions.values(), targets);
    let l1_penalty = match net.mode() {
        Mode::PreMask => kernel_penalty(net, lambda),
        Mode::Mask => 0.0,
    };
    let loss = LossBreakdown {
        mse,
        l1_penalty,
        total: mse + l1_penalty,
    };

    let mut grads = Gradients::zeros_like(net);

    // d(mse)/d(prediction_i) = 2 (p_i - y_i) / N
    let mut delta = Matrix::zeros(batch.rows(), 1);
    for r in 0..batch.rows() {
        let p = predictions.get(r, 0);
        delta.set(r, 0, 2.0 * (p - targets[r]) / n);
    }

    let layers = net.stage_layers();
    let stages = grads.stages_mut();
    debug_assert_eq!(layers.len(), stages.len());
    debug_assert_eq!(layers.len(), trace.stage_inputs.len());

    let mut d_out = delta;
    for ((layer, stage_grads), (x, a)) in layers
        .iter()
        .zip(stages)
        .zip(trace.stage_inputs.iter().zip(trace.stage_outputs.iter()))
        .rev()
    {
        d_out = layer.backward_batch(x, a, &d_out, stage_grads);
    }

    if net.mode() == Mode::PreMask {
        let kernel = net.input_kernel().expect("pre-mask network has a kernel");
        let d = kernel.in_dim() as f64;
        let scale = lambda / (d * d);
        let kg = grads
            .input_kernel
            .as_mut()
            .expect("gradients mirror the network");
        for (g, &w) in kg
            .weights
            .values_mut()
            .iter_mut()
            .zip(kernel.weights().values())
        {
            // signum(0.0) is 0, matching the chosen subgradient.
            *g += scale * sign(w);
        }
    }

    Ok((loss, grads))
}

#[inline]
fn sign(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}
