use crate::masking::BinaryMask;
use crate::matrix::Matrix;
use crate::nn::{Activation, DenseLayer, NnError};
use crate::rng::Rng;

/// Which input stage the network runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dense square input kernel in front of the hidden stack.
    PreMask,
    /// Element-wise binary gate in front of the hidden stack.
    Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum InputStage {
    Kernel(DenseLayer),
    Gate(BinaryMask),
}

/// Hidden-stack shape shared by both modes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkArch {
    pub hidden_sizes: Vec<usize>,
    pub slope: f64,
}

impl Default for NetworkArch {
    /// Nine 256-unit hidden layers with leaky-ReLU slope 0.3.
    fn default() -> Self {
        NetworkArch {
            hidden_sizes: vec![256; 9],
            slope: 0.3,
        }
    }
}

impl NetworkArch {
    pub fn new(hidden_sizes: Vec<usize>, slope: f64) -> Self {
        NetworkArch {
            hidden_sizes,
            slope,
        }
    }
}

/// Feed-forward regressor with a scalar linear readout.
///
/// Pre-mask mode: `output(hidden(...hidden(kernel(x))))` where the
/// kernel is a square `d x d` linear layer with bias. Mask mode: the
/// kernel is replaced by an element-wise gate that passes input `j`
/// through when `mask.bits[j]` is set and substitutes exact `0.0`
/// otherwise. Gating is a select, not a multiply, so predictions are
/// bit-identical under any perturbation of a gated-out coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input: InputStage,
    hidden: Vec<DenseLayer>,
    output: DenseLayer,
}

/// Per-layer activations recorded by a forward pass, as needed for the
/// reverse sweep. `stage_inputs[i]` is the input to parameterized layer
/// `i` (kernel first in pre-mask mode), `stage_outputs[i]` its output.
pub(crate) struct ForwardTrace {
    pub stage_inputs: Vec<Matrix>,
    pub stage_outputs: Vec<Matrix>,
}

impl Network {
    /// Fresh pre-mask network: Glorot-uniform weights, zero biases,
    /// layers initialized in forward order from `seed`.
    pub fn premask(d: usize, arch: &NetworkArch, seed: u64) -> Result<Network, NnError> {
        if d == 0 {
            return Err(NnError::InvalidNetwork("input dimension 0".into()));
        }
        let mut rng = Rng::new(seed);
        let kernel = DenseLayer::glorot(d, d, Activation::Linear, &mut rng);
        let act = Activation::LeakyRelu { slope: arch.slope };
        act.validate().map_err(NnError::InvalidNetwork)?;
        let mut hidden = Vec::with_capacity(arch.hidden_sizes.len());
        let mut width = d;
        for &h in &arch.hidden_sizes {
            if h == 0 {
                return Err(NnError::InvalidNetwork("hidden layer of width 0".into()));
            }
            hidden.push(DenseLayer::glorot(width, h, act, &mut rng));
            width = h;
        }
        let output = DenseLayer::glorot(width, 1, Activation::Linear, &mut rng);
        Ok(Network {
            input: InputStage::Kernel(kernel),
            hidden,
            output,
        })
    }

    /// Assemble a pre-mask network from existing layers.
    pub fn from_premask_parts(
        kernel: DenseLayer,
        hidden: Vec<DenseLayer>,
        output: DenseLayer,
    ) -> Result<Network, NnError> {
        if kernel.in_dim() != kernel.out_dim() {
            return Err(NnError::InvalidNetwork(format!(
                "input kernel must be square, got {}x{}",
                kernel.out_dim(),
                kernel.in_dim()
            )));
        }
        if kernel.activation() != Activation::Linear {
            return Err(NnError::InvalidNetwork("input kernel must be linear".into()));
        }
        let net = Network {
            input: InputStage::Kernel(kernel),
            hidden,
            output,
        };
        net.validate_chain()?;
        Ok(net)
    }

    /// Assemble a mask-mode network from existing layers.
    pub fn from_mask_parts(
        mask: BinaryMask,
        hidden: Vec<DenseLayer>,
        output: DenseLayer,
    ) -> Result<Network, NnError> {
        let net = Network {
            input: InputStage::Gate(mask),
            hidden,
            output,
        };
        net.validate_chain()?;
        Ok(net)
    }

    /// Mask-mode twin of a pre-mask network: the input kernel is dropped
    /// and the hidden/output stack is copied verbatim (warm start).
    pub fn to_mask_mode(&self, mask: BinaryMask) -> Result<Network, NnError> {
        match &self.input {
            InputStage::Kernel(_) => {
                if mask.len() != self.input_dim() {
                    return Err(NnError::Shape(format!(
                        "mask length {} does not match input dimension {}",
                        mask.len(),
                        self.input_dim()
                    )));
                }
                Network::from_mask_parts(mask, self.hidden.clone(), self.output.clone())
            }
            InputStage::Gate(_) => Err(NnError::ModeMismatch {
                required: Mode::PreMask,
                actual: Mode::Mask,
            }),
        }
    }

    fn validate_chain(&self) -> Result<(), NnError> {
        let mut width = self.input_dim();
        for (i, layer) in self.hidden.iter().enumerate() {
            if layer.in_dim() != width {
                return Err(NnError::InvalidNetwork(format!(
                    "hidden layer {i} expects {} inputs but receives {width}",
                    layer.in_dim()
                )));
            }
            width = layer.out_dim();
        }
        if self.output.in_dim() != width {
            return Err(NnError::InvalidNetwork(format!(
                "output layer expects {} inputs but receives {width}",
                self.output.in_dim()
            )));
        }
        if self.output.out_dim() != 1 {
            return Err(NnError::InvalidNetwork(format!(
                "output layer must have one unit, got {}",
                self.output.out_dim()
            )));
        }
        if self.output.activation() != Activation::Linear {
            return Err(NnError::InvalidNetwork("output layer must be linear".into()));
        }
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        match self.input {
            InputStage::Kernel(_) => Mode::PreMask,
            InputStage::Gate(_) => Mode::Mask,
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.input {
            InputStage::Kernel(k) => k.in_dim(),
            InputStage::Gate(m) => m.len(),
        }
    }

    pub fn input_kernel(&self) -> Option<&DenseLayer> {
        match &self.input {
            InputStage::Kernel(k) => Some(k),
            InputStage::Gate(_) => None,
        }
    }

    pub fn mask(&self) -> Option<&BinaryMask> {
        match &self.input {
            InputStage::Kernel(_) => None,
            InputStage::Gate(m) => Some(m),
        }
    }

    pub fn hidden_layers(&self) -> &[DenseLayer] {
        &self.hidden
    }

    pub fn output_layer(&self) -> &DenseLayer {
        &self.output
    }

    /// Total number of trainable parameters.
    pub fn param_count(&self) -> usize {
        let input = match &self.input {
            InputStage::Kernel(k) => k.param_count(),
            InputStage::Gate(_) => 0,
        };
        input
            + self
                .hidden
                .iter()
                .map(DenseLayer::param_count)
                .sum::<usize>()
            + self.output.param_count()
    }

    /// Gate a batch through the mask: kept coordinates are copied,
    /// masked ones become exact `0.0`.
    fn gate_batch(mask: &BinaryMask, batch: &Matrix) -> Matrix {
        let mut gated = Matrix::zeros(batch.rows(), batch.cols());
        for r in 0..batch.rows() {
            let src = batch.row(r);
            let dst = gated.row_mut(r);
            for (j, bit) in mask.bits().iter().enumerate() {
                if *bit {
                    dst[j] = src[j];
                }
            }
        }
        gated
    }

    /// Predictions for a batch (one row per sample).
    pub fn forward(&self, batch: &Matrix) -> Result<Vec<f64>, NnError> {
        let trace = self.forward_trace(batch)?;
        let last = trace
            .stage_outputs
            .last()
            .expect("network has at least the output layer");
        Ok(last.values().to_vec())
    }

    /// Forward pass that records per-layer inputs/outputs for the
    /// reverse sweep. Checks every layer output for non-finite values
    /// and reports the offending layer index (0 = input stage).
    pub(crate) fn forward_trace(&self, batch: &Matrix) -> Result<ForwardTrace, NnError> {
        if batch.cols() != self.input_dim() {
            return Err(NnError::Shape(format!(
                "network expects {} inputs, batch has {} columns",
                self.input_dim(),
                batch.cols()
            )));
        }
        let mut stage_inputs = Vec::new();
        let mut stage_outputs = Vec::new();
        let mut layer_index = 0usize;

        let mut current = match &self.input {
            InputStage::Kernel(kernel) => {
                let out = kernel.forward_batch(batch)?;
                if !out.all_finite() {
                    return Err(NnError::NonFinite { layer: layer_index });
                }
                stage_inputs.push(batch.clone());
                stage_outputs.push(out.clone());
                out
            }
            InputStage::Gate(mask) => Self::gate_batch(mask, batch),
        };
        layer_index += 1;

        for layer in &self.hidden {
            let out = layer.forward_batch(&current)?;
            if !out.all_finite() {
                return Err(NnError::NonFinite { layer: layer_index });
            }
            stage_inputs.push(current);
            stage_outputs.push(out.clone());
            current = out;
            layer_index += 1;
        }

        let out = self.output.forward_batch(&current)?;
        if !out.all_finite() {
            return Err(NnError::NonFinite { layer: layer_index });
        }
        stage_inputs.push(current);
        stage_outputs.push(out);
        Ok(ForwardTrace {
            stage_inputs,
            stage_outputs,
        })
    }

    /// Parameterized layers in forward (= checkpoint) order.
    pub(crate) fn stage_layers(&self) -> Vec<&DenseLayer> {
        let mut layers = Vec::new();
        if let InputStage::Kernel(k) = &self.input {
            layers.push(k);
        }
        layers.extend(self.hidden.iter());
        layers.push(&self.output);
        layers
    }

    pub(crate) fn stage_layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        let mut layers = Vec::new();
        if let InputStage::Kernel(k) = &mut self.input {
            layers.push(k);
        }
        layers.extend(self.hidden.iter_mut());
        layers.push(&mut self.output);
        layers
    }

    /// Flat parameter tensors in declared order: per layer, weights
    /// (row-major) then bias.
    pub fn param_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut tensors = Vec::new();
        for layer in self.stage_layers_mut() {
            // Split the borrow: weights and bias are disjoint fields.
            let (w, b) = layer.split_params_mut();
            tensors.push(w);
            tensors.push(b);
        }
        tensors
    }
}

impl DenseLayer {
    pub(crate) fn split_params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        // Safe split via raw pointers into two disjoint fields.
        let w: *mut [f64] = self.weights_mut().values_mut();
        let b: *mut [f64] = self.bias_mut();
        unsafe { (&mut *w, &mut *b) }
    }
}
