//! Desk-scale benchmark generators with known ground-truth drivers.
//!
//! Two mechanisms:
//!
//! - `SparseLinear`: `y = sum_{j in drivers} w_j x_j + eps`. Driver
//!   inputs are iid standard normal; every non-driver is a confounder
//!   `rho * driver + sqrt(1 - rho^2) * noise` tied round-robin to a
//!   driver, which gives correlation exactly `rho` in expectation while
//!   carrying zero structural effect.
//! - `ColumnNonlinear`: inputs form `levels x channels` vertical
//!   columns; each channel is an AR(1) chain over levels with
//!   coefficient `rho`, so neighboring levels correlate the way
//!   vertically mixed profiles do. The target is a smooth nonlinearity
//!   of the driver inputs. `shift` translates the driver set by whole
//!   levels, mimicking a driver pattern that moves under a climate
//!   shift.
//!
//! Everything is drawn from a single stream derived from the spec seed,
//! in a fixed order (structural coefficients first, then samples
//! row-major), so a spec reproduces its dataset bit for bit.

use std::collections::BTreeSet;

use crate::data::{DataError, Dataset, DatasetSchema, ScalingMode};
use crate::matrix::Matrix;
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    SparseLinear,
    ColumnNonlinear { levels: usize },
}

/// Recipe for a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub d: usize,
    pub n_samples: usize,
    /// Base driver set, before the shift is applied.
    pub drivers: BTreeSet<usize>,
    pub mechanism: Mechanism,
    pub spurious_corr: f64,
    pub noise_std: f64,
    /// Distribution-shift knob: drivers are translated by this many
    /// levels (`ColumnNonlinear`) or index positions (`SparseLinear`).
    /// Must be integral-valued.
    pub shift: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.d == 0 {
            return Err(DataError::InvalidSpec("d must be positive".into()));
        }
        if self.n_samples == 0 {
            return Err(DataError::InvalidSpec("n_samples must be positive".into()));
        }
        if self.drivers.is_empty() {
            return Err(DataError::InvalidSpec("drivers must be nonempty".into()));
        }
        if self.drivers.iter().any(|&j| j >= self.d) {
            return Err(DataError::InvalidSpec(format!(
                "driver index out of range 0..{}",
                self.d
            )));
        }
        if !(0.0..1.0).contains(&self.spurious_corr) {
            return Err(DataError::InvalidSpec(format!(
                "spurious_corr {} outside [0, 1)",
                self.spurious_corr
            )));
        }
        if self.noise_std < 0.0 || !self.noise_std.is_finite() {
            return Err(DataError::InvalidSpec(format!(
                "noise_std {} must be a nonnegative real",
                self.noise_std
            )));
        }
        if self.shift.fract() != 0.0 {
            return Err(DataError::InvalidSpec(format!(
                "shift {} must be integral-valued",
                self.shift
            )));
        }
        if let Mechanism::ColumnNonlinear { levels } = self.mechanism {
            if levels == 0 || self.d % levels != 0 {
                return Err(DataError::InvalidSpec(format!(
                    "d = {} is not a multiple of levels = {levels}",
                    self.d
                )));
            }
        }
        self.effective_drivers()?;
        Ok(())
    }

    fn shift_steps(&self) -> i64 {
        self.shift as i64
    }

    /// Driver set after applying the shift translation.
    pub fn effective_drivers(&self) -> Result<BTreeSet<usize>, DataError> {
        let offset: i64 = match self.mechanism {
            Mechanism::SparseLinear => self.shift_steps(),
            Mechanism::ColumnNonlinear { levels } => {
                let channels = (self.d / levels) as i64;
                self.shift_steps() * channels
            }
        };
        let mut translated = BTreeSet::new();
        for &j in &self.drivers {
            let moved = j as i64 + offset;
            if moved < 0 || moved >= self.d as i64 {
                return Err(DataError::InvalidSpec(format!(
                    "shift {} moves driver {j} out of range 0..{}",
                    self.shift, self.d
                )));
            }
            translated.insert(moved as usize);
        }
        Ok(translated)
    }

    /// Column names: `x##` for SparseLinear, `l##_c#` for column data.
    pub fn schema(&self) -> DatasetSchema {
        match self.mechanism {
            Mechanism::SparseLinear => DatasetSchema::generic(self.d),
            Mechanism::ColumnNonlinear { levels } => {
                let channels = self.d / levels;
                let lw = (levels.max(2) - 1).to_string().len();
                let names = (0..self.d)
                    .map(|j| format!("l{:0lw$}_c{}", j / channels, j % channels))
                    .collect();
                DatasetSchema {
                    input_names: names,
                    output_name: "y".into(),
                    output_norm_constant: 1.0,
                    input_scaling: ScalingMode::Standardize,
                }
            }
        }
    }
}

/// Structural weights of the SparseLinear target, one per effective
/// driver in ascending index order. Magnitudes are uniform in [1, 2]
/// with random signs, drawn deterministically from the spec seed.
pub fn sparse_linear_weights(spec: &SyntheticSpec) -> Result<Vec<f64>, DataError> {
    let drivers = spec.effective_drivers()?;
    let mut rng = Rng::for_stream(spec.seed, stream::SYNTHETIC);
    Ok(draw_signed_weights(&mut rng, drivers.len(), 1.0, 2.0))
}

fn draw_signed_weights(rng: &mut Rng, count: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..count)
        .map(|_| {
            let magnitude = rng.uniform(lo, hi);
            if rng.next_u64() & 1 == 0 {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect()
}

/// Generate a dataset from a spec; `truth_drivers` is set to the
/// effective (shift-translated) driver set.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    match spec.mechanism {
        Mechanism::SparseLinear => generate_sparse_linear(spec),
        Mechanism::ColumnNonlinear { levels } => generate_column_nonlinear(spec, levels),
    }
}

fn generate_sparse_linear(spec: &SyntheticSpec) -> Result<Dataset, DataError> {
    let drivers: Vec<usize> = spec.effective_drivers()?.into_iter().collect();
    let mut rng = Rng::for_stream(spec.seed, stream::SYNTHETIC);
    let weights = draw_signed_weights(&mut rng, drivers.len(), 1.0, 2.0);

    let non_drivers: Vec<usize> = (0..spec.d).filter(|j| !drivers.contains(j)).collect();
    let rho = spec.spurious_corr;
    let mix = (1.0 - rho * rho).sqrt();

    let mut x = Matrix::zeros(spec.n_samples, spec.d);
    let mut y = vec![0.0; spec.n_samples];
    for r in 0..spec.n_samples {
        let row = x.row_mut(r);
        for &j in &drivers {
            row[j] = rng.normal();
        }
        for (rank, &j) in non_drivers.iter().enumerate() {
            let partner = drivers[rank % drivers.len()];
            row[j] = rho * row[partner] + mix * rng.normal();
        }
        let mut target = 0.0;
        for (w, &j) in weights.iter().zip(&drivers) {
            target += w * row[j];
        }
        y[r] = target + spec.noise_std * rng.normal();
    }

    Dataset::new(
        spec.schema(),
        x,
        y,
        None,
        None,
        Some(drivers.into_iter().collect()),
    )
}

/// Exact variance of `sum_i a_i s_i` for column drivers whose
/// correlation is `rho^|level gap|` within a channel and 0 across
/// channels.
fn driver_mix_variance(coeffs: &[f64], drivers: &[usize], channels: usize, rho: f64) -> f64 {
    let mut var = 0.0;
    for (i, &ji) in drivers.iter().enumerate() {
        for (k, &jk) in drivers.iter().enumerate() {
            let (li, ci) = (ji / channels, ji % channels);
            let (lk, ck) = (jk / channels, jk % channels);
            let cov = if ci == ck {
                rho.powi((li as i32 - lk as i32).abs())
            } else {
                0.0
            };
            var += coeffs[i] * coeffs[k] * cov;
        }
    }
    var
}

fn generate_column_nonlinear(spec: &SyntheticSpec, levels: usize) -> Result<Dataset, DataError> {
    let channels = spec.d / levels;
    let drivers: Vec<usize> = spec.effective_drivers()?.into_iter().collect();
    let mut rng = Rng::for_stream(spec.seed, stream::SYNTHETIC);

    // Three driver mixtures feed the smooth target; coefficients are
    // bounded away from zero so every driver matters.
    let k = drivers.len();
    let scale = 1.0 / (k as f64).sqrt();
    let mix_a = draw_signed_weights(&mut rng, k, 0.5 * scale, 1.0 * scale);
    let mix_b = draw_signed_weights(&mut rng, k, 0.5 * scale, 1.0 * scale);
    let mix_c = draw_signed_weights(&mut rng, k, 0.5 * scale, 1.0 * scale);
    let var_c = driver_mix_variance(&mix_c, &drivers, channels, spec.spurious_corr);

    let rho = spec.spurious_corr;
    let ar_mix = (1.0 - rho * rho).sqrt();
    let mut x = Matrix::zeros(spec.n_samples, spec.d);
    let mut y = vec![0.0; spec.n_samples];
    for r in 0..spec.n_samples {
        let row = x.row_mut(r);
        for c in 0..channels {
            let mut prev = rng.normal();
            row[c] = prev;
            for l in 1..levels {
                let v = rho * prev + ar_mix * rng.normal();
                row[l * channels + c] = v;
                prev = v;
            }
        }
        let (mut u_a, mut u_b, mut u_c) = (0.0, 0.0, 0.0);
        for (i, &j) in drivers.iter().enumerate() {
            u_a += mix_a[i] * row[j];
            u_b += mix_b[i] * row[j];
            u_c += mix_c[i] * row[j];
        }
        let target = u_a + 0.8 * (1.5 * u_b).tanh() + 0.4 * (u_c * u_c - var_c);
        y[r] = target + spec.noise_std * rng.normal();
    }

    Dataset::new(
        spec.schema(),
        x,
        y,
        None,
        None,
        Some(drivers.into_iter().collect()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec() -> SyntheticSpec {
        SyntheticSpec {
            d: 8,
            n_samples: 100,
            drivers: [0usize, 3].into_iter().collect(),
            mechanism: Mechanism::SparseLinear,
            spurious_corr: 0.5,
            noise_std: 0.1,
            shift: 0.0,
            seed: 42,
        }
    }

    #[test]
    fn empty_drivers_rejected() {
        let mut spec = base_spec();
        spec.drivers.clear();
        assert!(matches!(
            generate_synthetic(&spec),
            Err(DataError::InvalidSpec(_))
        ));
    }

    #[test]
    fn noiseless_sparse_linear_matches_structural_equation() {
        let mut spec = base_spec();
        spec.noise_std = 0.0;
        let ds = generate_synthetic(&spec).unwrap();
        let weights = sparse_linear_weights(&spec).unwrap();
        let drivers: Vec<usize> = spec.effective_drivers().unwrap().into_iter().collect();
        for r in 0..ds.len() {
            let expected: f64 = weights
                .iter()
                .zip(&drivers)
                .map(|(w, &j)| w * ds.x().get(r, j))
                .sum();
            assert_eq!(ds.y()[r], expected);
        }
    }

    #[test]
    fn single_driver_weight_reproduces_target() {
        // one driver, noise 0: y is exactly w * x_driver, so fixing
        // x = 1 gives y = w; verified through the exposed weights
        let mut spec = base_spec();
        spec.drivers = [2usize].into_iter().collect();
        spec.noise_std = 0.0;
        let ds = generate_synthetic(&spec).unwrap();
        let w = sparse_linear_weights(&spec).unwrap()[0];
        for r in 0..ds.len() {
            let x = ds.x().get(r, 2);
            assert_eq!(ds.y()[r], w * x);
        }
    }

    #[test]
    fn confounder_correlation_close_to_requested() {
        let mut spec = base_spec();
        spec.d = 4;
        spec.drivers = [0usize].into_iter().collect();
        spec.spurious_corr = 0.9;
        spec.n_samples = 50_000;
        let ds = generate_synthetic(&spec).unwrap();
        // column 1 is a confounder of driver 0
        let n = ds.len() as f64;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for r in 0..ds.len() {
            let a = ds.x().get(r, 0);
            let b = ds.x().get(r, 1);
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
        }
        let cov = sxy / n - sx / n * (sy / n);
        let var_a = sxx / n - (sx / n) * (sx / n);
        let var_b = syy / n - (sy / n) * (sy / n);
        let corr = cov / (var_a.sqrt() * var_b.sqrt());
        assert!((corr - 0.9).abs() < 0.05, "corr {corr}");
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let spec = base_spec();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn column_shift_translates_truth_drivers() {
        let spec = SyntheticSpec {
            d: 24,
            n_samples: 10,
            drivers: [6usize, 7, 8, 9].into_iter().collect(), // levels 3..4
            mechanism: Mechanism::ColumnNonlinear { levels: 12 },
            spurious_corr: 0.8,
            noise_std: 0.1,
            shift: 2.0,
            seed: 7,
        };
        let ds = generate_synthetic(&spec).unwrap();
        // 2 channels: +2 levels means +4 index positions
        let expected: BTreeSet<usize> = [10usize, 11, 12, 13].into_iter().collect();
        assert_eq!(ds.truth_drivers().unwrap(), &expected);
    }

    #[test]
    fn shift_out_of_range_is_rejected() {
        let mut spec = base_spec();
        spec.shift = 7.0; // moves driver 3 to 10, out of range for d=8
        assert!(spec.validate().is_err());
    }

    #[test]
    fn column_nonlinear_neighbor_levels_correlate() {
        let spec = SyntheticSpec {
            d: 12,
            n_samples: 30_000,
            drivers: [0usize].into_iter().collect(),
            mechanism: Mechanism::ColumnNonlinear { levels: 6 },
            spurious_corr: 0.8,
            noise_std: 0.0,
            shift: 0.0,
            seed: 5,
        };
        let ds = generate_synthetic(&spec).unwrap();
        // channel 0, levels 2 and 3 -> indices 4 and 6
        let n = ds.len() as f64;
        let mut sxy = 0.0;
        for r in 0..ds.len() {
            sxy += ds.x().get(r, 4) * ds.x().get(r, 6);
        }
        let corr = sxy / n; // both are standard normal in expectation
        assert!((corr - 0.8).abs() < 0.05, "corr {corr}");
    }
}
