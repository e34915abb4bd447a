use serde::{Deserialize, Serialize};

/// Leaky rectifier: `x` for `x >= 0`, `slope * x` otherwise.
#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Element-wise layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Activation::Linear => Ok(()),
            Activation::LeakyRelu { slope } => {
                if *slope > 0.0 && *slope < 1.0 {
                    Ok(())
                } else {
                    Err(format!("leaky relu slope {slope} not in (0, 1)"))
                }
            }
        }
    }

    #[inline]
    pub fn apply_in_place(&self, values: &mut [f64]) {
        if let Activation::LeakyRelu { slope } = self {
            for v in values {
                *v = leaky_relu(*v, *slope);
            }
        }
    }

    /// Derivative recovered from the activation output. For the leaky
    /// rectifier the output sign matches the input sign (slope > 0), so
    /// the pre-activation does not need to be stored.
    #[inline]
    pub fn derivative_from_output(&self, output: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::LeakyRelu { slope } => {
                if output >= 0.0 {
                    1.0
                } else {
                    *slope
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_branches() {
        assert_eq!(leaky_relu(2.0, 0.3), 2.0);
        assert_eq!(leaky_relu(-1.0, 0.3), -0.3);
        assert_eq!(leaky_relu(0.0, 0.3), 0.0);
    }

    #[test]
    fn slope_validation() {
        assert!(Activation::LeakyRelu { slope: 0.3 }.validate().is_ok());
        assert!(Activation::LeakyRelu { slope: 0.0 }.validate().is_err());
        assert!(Activation::LeakyRelu { slope: 1.0 }.validate().is_err());
    }

    #[test]
    fn derivative_matches_branch() {
        let act = Activation::LeakyRelu { slope: 0.3 };
        assert_eq!(act.derivative_from_output(1.5), 1.0);
        assert_eq!(act.derivative_from_output(-0.45), 0.3);
        assert_eq!(act.derivative_from_output(0.0), 1.0);
    }
}
