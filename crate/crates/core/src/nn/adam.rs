use crate::nn::{Gradients, Network, NnError};

/// Adam optimizer state: first/second moment estimates per parameter
/// tensor plus the step counter used for bias correction. Defaults are
/// `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    /// Zero-initialized moments shaped like the network's parameters.
    pub fn new_for(net: &Network) -> AdamState {
        let mut probe = net.clone();
        let shapes: Vec<usize> = probe.param_tensors_mut().iter().map(|t| t.len()).collect();
        AdamState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update of `net` from `grads` at learning rate `lr`.
    /// Standard bias-corrected update; increments the step counter.
    pub fn apply(
        &mut self,
        net: &mut Network,
        grads: &Gradients,
        lr: f64,
    ) -> Result<(), NnError> {
        assert!(lr > 0.0, "learning rate must be positive");
        let mut params = net.param_tensors_mut();
        let grad_tensors = grads.tensors();
        if params.len() != self.m.len() || grad_tensors.len() != self.m.len() {
            return Err(NnError::Shape(format!(
                "optimizer state has {} tensors, network {} and gradients {}",
                self.m.len(),
                params.len(),
                grad_tensors.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(&grad_tensors)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if param.len() != grad.len() || param.len() != m.len() {
                return Err(NnError::Shape(format!(
                    "tensor length mismatch: param {}, grad {}, state {}",
                    param.len(),
                    grad.len(),
                    m.len()
                )));
            }
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
