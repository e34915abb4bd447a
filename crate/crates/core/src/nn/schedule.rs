use serde::{Deserialize, Serialize};

use crate::nn::NnError;

/// Step-decay learning-rate schedule: the rate is divided by
/// `decay_factor` once every `decay_every` epochs, starting with the
/// first batch of the decay epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl LrSchedule {
    pub fn new(initial_lr: f64, decay_factor: f64, decay_every: usize) -> Result<Self, NnError> {
        if !(initial_lr > 0.0) {
            return Err(NnError::InvalidNetwork(format!(
                "initial_lr must be positive, got {initial_lr}"
            )));
        }
        if !(decay_factor > 1.0) {
            return Err(NnError::InvalidNetwork(format!(
                "decay_factor must exceed 1, got {decay_factor}"
            )));
        }
        if decay_every == 0 {
            return Err(NnError::InvalidNetwork("decay_every must be >= 1".into()));
        }
        Ok(LrSchedule {
            initial_lr,
            decay_factor,
            decay_every,
        })
    }

    /// `initial_lr / decay_factor^(epoch / decay_every)` (integer division).
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.initial_lr / self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

impl Default for LrSchedule {
    /// 0.001 divided by five every three epochs.
    fn default() -> Self {
        LrSchedule {
            initial_lr: 0.001,
            decay_factor: 5.0,
            decay_every: 3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_values() {
        let s = LrSchedule::default();
        assert_eq!(s.lr_at_epoch(0), 0.001);
        assert_eq!(s.lr_at_epoch(1), 0.001);
        assert_eq!(s.lr_at_epoch(2), 0.001);
        assert_eq!(s.lr_at_epoch(3), 0.0002);
        assert_eq!(s.lr_at_epoch(5), 0.0002);
        assert_eq!(s.lr_at_epoch(8), 0.00004);
    }

    #[test]
    fn constructor_validates() {
        assert!(LrSchedule::new(0.0, 5.0, 3).is_err());
        assert!(LrSchedule::new(0.1, 1.0, 3).is_err());
        assert!(LrSchedule::new(0.1, 5.0, 0).is_err());
        assert!(LrSchedule::new(0.1, 5.0, 1).is_ok());
    }
}
