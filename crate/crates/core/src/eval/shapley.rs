//! Shapley-value attribution for black-box regressors.
//!
//! The coalition value function is interventional: `v(S)` is the mean
//! model output over a background sample set with the features inside
//! `S` taken from the explained sample and the rest taken from each
//! background row. Exact enumeration is available up to 15 features;
//! above that, permutation sampling gives unbiased estimates with
//! standard errors.

use std::fmt::Write as _;

use crate::eval::EvalError;
use crate::matrix::Matrix;
use crate::nn::Network;
use crate::rng::{derive_seed, stream, Rng};

/// Black-box scalar regressor.
pub trait Predictor: Sync {
    fn input_dim(&self) -> usize;
    fn predict(&self, batch: &Matrix) -> Result<Vec<f64>, EvalError>;
}

impl Predictor for Network {
    fn input_dim(&self) -> usize {
        Network::input_dim(self)
    }

    fn predict(&self, batch: &Matrix) -> Result<Vec<f64>, EvalError> {
        self.forward(batch).map_err(|e| EvalError::Model(e.to_string()))
    }
}

const EXACT_MAX_FEATURES: usize = 15;

fn check_inputs(model: &dyn Predictor, x: &[f64], background: &Matrix) -> Result<(), EvalError> {
    let d = model.input_dim();
    if x.len() != d {
        return Err(EvalError::Shape(format!(
            "sample has {} features, model expects {d}",
            x.len()
        )));
    }
    if background.cols() != d {
        return Err(EvalError::Shape(format!(
            "background has {} columns, model expects {d}",
            background.cols()
        )));
    }
    if background.rows() == 0 {
        return Err(EvalError::EmptyBackground);
    }
    Ok(())
}

/// Rows for `v(S)`: the explained sample's features inside `S`, each
/// background row's outside.
fn coalition_rows(x: &[f64], background: &Matrix, in_coalition: &[bool], out: &mut Matrix, at: usize) {
    for b in 0..background.rows() {
        let dst = out.row_mut(at + b);
        dst.copy_from_slice(background.row(b));
        for (j, &inside) in in_coalition.iter().enumerate() {
            if inside {
                dst[j] = x[j];
            }
        }
    }
}

/// Exact Shapley values by coalition enumeration (`d <= 15`).
pub fn shapley_exact(
    model: &dyn Predictor,
    x: &[f64],
    background: &Matrix,
) -> Result<Vec<f64>, EvalError> {
    check_inputs(model, x, background)?;
    let d = model.input_dim();
    if d > EXACT_MAX_FEATURES {
        return Err(EvalError::TooManyFeatures {
            max: EXACT_MAX_FEATURES,
            d,
        });
    }
    let b = background.rows();
    let subsets = 1usize << d;

    // v(S) for every coalition, evaluated in chunks of subsets so the
    // batch matrices stay small.
    let mut values = vec![0.0; subsets];
    let chunk = (4096 / b).max(1);
    let mut members = vec![false; d];
    let mut s = 0usize;
    while s < subsets {
        let count = chunk.min(subsets - s);
        let mut batch = Matrix::zeros(count * b, d);
        for (k, mask) in (s..s + count).enumerate() {
            for (j, slot) in members.iter_mut().enumerate() {
                *slot = mask >> j & 1 == 1;
            }
            coalition_rows(x, background, &members, &mut batch, k * b);
        }
        let preds = model.predict(&batch)?;
        for (k, value) in values[s..s + count].iter_mut().enumerate() {
            *value = preds[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64;
        }
        s += count;
    }

    // phi_j = sum over S not containing j of |S|!(d-|S|-1)!/d! * (v(S+j) - v(S))
    let mut factorial = vec![1.0; d + 1];
    for i in 1..=d {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; d];
    for mask in 0..subsets {
        let size = (mask as u64).count_ones() as usize;
        let weight = factorial[size] * factorial[d - size - 1] / factorial[d];
        for (j, phi_j) in phi.iter_mut().enumerate() {
            if mask >> j & 1 == 0 {
                *phi_j += weight * (values[mask | 1 << j] - values[mask]);
            }
        }
    }
    Ok(phi)
}

/// Permutation-sampling Shapley estimate with per-feature standard
/// errors. Each permutation contributes one unbiased marginal per
/// feature; `standard_errors[j]` is the sample standard error of the
/// mean (infinite when fewer than two permutations were drawn).
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyEstimate {
    pub values: Vec<f64>,
    pub standard_errors: Vec<f64>,
}

pub fn shapley_sampled(
    model: &dyn Predictor,
    x: &[f64],
    background: &Matrix,
    n_permutations: usize,
    seed: u64,
) -> Result<ShapleyEstimate, EvalError> {
    check_inputs(model, x, background)?;
    assert!(n_permutations >= 1, "need at least one permutation");
    let d = model.input_dim();
    let b = background.rows();
    let mut rng = Rng::new(seed);

    // v(empty set) is permutation independent.
    let mut empty_batch = Matrix::zeros(b, d);
    coalition_rows(x, background, &vec![false; d], &mut empty_batch, 0);
    let v_empty = model.predict(&empty_batch)?.iter().sum::<f64>() / b as f64;

    // Welford accumulators per feature.
    let mut mean = vec![0.0; d];
    let mut m2 = vec![0.0; d];

    let mut order: Vec<usize> = (0..d).collect();
    let mut members = vec![false; d];
    for p in 0..n_permutations {
        rng.shuffle(&mut order);
        // One batched forward per permutation: row block k holds the
        // coalition after adding the k-th feature of the order.
        let mut batch = Matrix::zeros(d * b, d);
        members.fill(false);
        for (k, &j) in order.iter().enumerate() {
            members[j] = true;
            coalition_rows(x, background, &members, &mut batch, k * b);
        }
        let preds = model.predict(&batch)?;
        let mut v_prev = v_empty;
        for (k, &j) in order.iter().enumerate() {
            let v_next = preds[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64;
            let marginal = v_next - v_prev;
            v_prev = v_next;
            let delta = marginal - mean[j];
            mean[j] += delta / (p + 1) as f64;
            m2[j] += delta * (marginal - mean[j]);
        }
    }

    let standard_errors = m2
        .iter()
        .map(|&m2j| {
            if n_permutations >= 2 {
                (m2j / (n_permutations - 1) as f64 / n_permutations as f64).sqrt()
            } else {
                f64::INFINITY
            }
        })
        .collect();
    Ok(ShapleyEstimate {
        values: mean,
        standard_errors,
    })
}

/// Which estimator attribution uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttributionEstimator {
    Exact,
    Sampled { n_permutations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributionConfig {
    pub estimator: AttributionEstimator,
    pub seed: u64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            estimator: AttributionEstimator::Sampled {
                n_permutations: 200,
            },
            seed: 42,
        }
    }
}

/// Mean absolute Shapley value per input over a set of samples. Sample
/// `i` uses a seed stream derived from `(config.seed, i)`, so the
/// result does not depend on evaluation order.
pub fn mean_abs_attribution(
    model: &dyn Predictor,
    samples: &Matrix,
    background: &Matrix,
    config: &AttributionConfig,
) -> Result<Vec<f64>, EvalError> {
    if samples.rows() == 0 {
        return Err(EvalError::TooFewSamples {
            required: 1,
            actual: 0,
        });
    }
    let d = model.input_dim();
    let mut sums = vec![0.0; d];
    let base = derive_seed(config.seed, stream::ATTRIBUTION);
    for i in 0..samples.rows() {
        let x = samples.row(i);
        let phi = match config.estimator {
            AttributionEstimator::Exact => shapley_exact(model, x, background)?,
            AttributionEstimator::Sampled { n_permutations } => {
                shapley_sampled(model, x, background, n_permutations, derive_seed(base, i as u64))?
                    .values
            }
        };
        for (s, p) in sums.iter_mut().zip(&phi) {
            *s += p.abs();
        }
    }
    let n = samples.rows() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// Mean-|attribution| rows (one per output) with labels, ready for CSV
/// or JSON emission.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix {
    pub output_names: Vec<String>,
    pub input_names: Vec<String>,
    pub values: Matrix,
    pub sample_count: usize,
    pub baseline: String,
}

impl AttributionMatrix {
    pub fn single_output(
        output_name: &str,
        input_names: Vec<String>,
        row: Vec<f64>,
        sample_count: usize,
        baseline: String,
    ) -> Result<AttributionMatrix, EvalError> {
        let d = input_names.len();
        let values = Matrix::from_values(1, d, row)
            .map_err(|e| EvalError::Shape(format!("attribution row: {e}")))?;
        Ok(AttributionMatrix {
            output_names: vec![output_name.to_string()],
            input_names,
            values,
            sample_count,
            baseline,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("output,{}\n", self.input_names.join(","));
        for (r, name) in self.output_names.iter().enumerate() {
            write!(out, "{name}").expect("string write");
            for v in self.values.row(r) {
                write!(out, ",{v}").expect("string write");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .output_names
            .iter()
            .enumerate()
            .map(|(r, name)| {
                serde_json::json!({
                    "output": name,
                    "mean_abs_attribution": self.values.row(r),
                })
            })
            .collect();
        serde_json::json!({
            "input_names": self.input_names,
            "rows": rows,
            "sample_count": self.sample_count,
            "baseline": self.baseline,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::BinaryMask;
    use crate::nn::{Network, NetworkArch};

    /// Test-only predictor wrapping a closure over one sample row.
    struct FnModel<F: Fn(&[f64]) -> f64 + Sync> {
        d: usize,
        f: F,
    }

    impl<F: Fn(&[f64]) -> f64 + Sync> Predictor for FnModel<F> {
        fn input_dim(&self) -> usize {
            self.d
        }

        fn predict(&self, batch: &Matrix) -> Result<Vec<f64>, EvalError> {
            Ok(batch.row_iter().map(|row| (self.f)(row)).collect())
        }
    }

    /// Independent oracle: direct double-loop evaluation of the Shapley
    /// formula, one feature at a time, no shared coalition cache.
    fn naive_shapley(model: &dyn Predictor, x: &[f64], background: &Matrix) -> Vec<f64> {
        let d = model.input_dim();
        let b = background.rows();
        let v = |mask: usize| -> f64 {
            let members: Vec<bool> = (0..d).map(|j| mask >> j & 1 == 1).collect();
            let mut batch = Matrix::zeros(b, d);
            coalition_rows(x, background, &members, &mut batch, 0);
            model.predict(&batch).unwrap().iter().sum::<f64>() / b as f64
        };
        let fact = |n: usize| -> f64 { (1..=n).map(|i| i as f64).product::<f64>().max(1.0) };
        (0..d)
            .map(|j| {
                let mut phi = 0.0;
                for mask in 0..1usize << d {
                    if mask >> j & 1 == 1 {
                        continue;
                    }
                    let s = (mask as u64).count_ones() as usize;
                    let w = fact(s) * fact(d - s - 1) / fact(d);
                    phi += w * (v(mask | 1 << j) - v(mask));
                }
                phi
            })
            .collect()
    }

    #[test]
    fn linear_model_attributions_are_weight_times_offset() {
        // f(x) = 2 x0 + 3 x1, background at the origin, x = (1, 1):
        // phi = (2, 3), cross-checked against the naive oracle.
        let model = FnModel {
            d: 2,
            f: |x: &[f64]| 2.0 * x[0] + 3.0 * x[1],
        };
        let background = Matrix::zeros(1, 2);
        let x = [1.0, 1.0];
        let phi = shapley_exact(&model, &x, &background).unwrap();
        assert!((phi[0] - 2.0).abs() < 1e-12);
        assert!((phi[1] - 3.0).abs() < 1e-12);
        let oracle = naive_shapley(&model, &x, &background);
        for (a, b) in phi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_matches_naive_oracle_on_nonlinear_model() {
        let model = FnModel {
            d: 4,
            f: |x: &[f64]| x[0] * x[1] + (x[2] - 0.5).tanh() + 0.3 * x[3] * x[3],
        };
        let mut rng = Rng::new(77);
        let mut bg = Matrix::zeros(6, 4);
        for v in bg.values_mut() {
            *v = rng.normal();
        }
        let x = [0.7, -1.2, 0.4, 1.5];
        let phi = shapley_exact(&model, &x, &bg).unwrap();
        let oracle = naive_shapley(&model, &x, &bg);
        for (a, b) in phi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_model_gets_zero_attribution() {
        let model = FnModel {
            d: 3,
            f: |_: &[f64]| 4.2,
        };
        let bg = Matrix::zeros(2, 3);
        let phi = shapley_exact(&model, &[1.0, 2.0, 3.0], &bg).unwrap();
        assert_eq!(phi, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn symmetric_features_get_equal_attribution() {
        let model = FnModel {
            d: 2,
            f: |x: &[f64]| x[0] + x[1],
        };
        let bg = Matrix::from_values(2, 2, vec![0.3, 0.3, -0.7, -0.7]).unwrap();
        let phi = shapley_exact(&model, &[1.0, 1.0], &bg).unwrap();
        assert!((phi[0] - phi[1]).abs() < 1e-12);
    }

    #[test]
    fn efficiency_axiom_holds_tightly() {
        let model = FnModel {
            d: 5,
            f: |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v).sum::<f64>()
                + x[0] * x[4],
        };
        let mut rng = Rng::new(123);
        let mut bg = Matrix::zeros(8, 5);
        for v in bg.values_mut() {
            *v = rng.normal();
        }
        let x = [0.5, -0.25, 1.5, 0.0, -1.0];
        let phi = shapley_exact(&model, &x, &bg).unwrap();
        let full = model
            .predict(&Matrix::from_values(1, 5, x.to_vec()).unwrap())
            .unwrap()[0];
        let base = model.predict(&bg).unwrap().iter().sum::<f64>() / 8.0;
        let residual = (phi.iter().sum::<f64>() - (full - base)).abs();
        assert!(residual < 1e-9, "efficiency residual {residual}");
    }

    #[test]
    fn exact_guard_directs_to_sampled() {
        let model = FnModel {
            d: 16,
            f: |x: &[f64]| x[0],
        };
        let bg = Matrix::zeros(1, 16);
        let x = vec![0.0; 16];
        assert!(matches!(
            shapley_exact(&model, &x, &bg),
            Err(EvalError::TooManyFeatures { max: 15, d: 16 })
        ));
    }

    #[test]
    fn sampled_is_seed_deterministic() {
        let model = FnModel {
            d: 4,
            f: |x: &[f64]| x[0] * x[1] - x[2] + 0.5 * x[3],
        };
        let mut rng = Rng::new(9);
        let mut bg = Matrix::zeros(5, 4);
        for v in bg.values_mut() {
            *v = rng.normal();
        }
        let x = [1.0, -0.5, 0.25, 2.0];
        let a = shapley_sampled(&model, &x, &bg, 64, 7).unwrap();
        let b = shapley_sampled(&model, &x, &bg, 64, 7).unwrap();
        assert_eq!(a, b);
        let c = shapley_sampled(&model, &x, &bg, 64, 8).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn sampled_agrees_with_exact_within_three_standard_errors() {
        let model = FnModel {
            d: 6,
            f: |x: &[f64]| {
                (x[0] + 0.5 * x[1]).tanh() + x[2] * x[3] - 0.25 * x[4] + 0.1 * x[5] * x[5]
            },
        };
        let mut rng = Rng::new(31);
        let mut bg = Matrix::zeros(8, 6);
        for v in bg.values_mut() {
            *v = rng.normal();
        }
        let x: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let exact = shapley_exact(&model, &x, &bg).unwrap();
        let sampled = shapley_sampled(&model, &x, &bg, 2000, 5).unwrap();
        for j in 0..6 {
            let err = (sampled.values[j] - exact[j]).abs();
            let bound = 3.0 * sampled.standard_errors[j].max(1e-12);
            assert!(err <= bound, "feature {j}: err {err} > 3 se {bound}");
        }
    }

    #[test]
    fn masked_features_get_exactly_zero() {
        let d = 5;
        let net = Network::premask(d, &NetworkArch::new(vec![8], 0.3), 3)
            .unwrap()
            .to_mask_mode(BinaryMask::new(vec![true, false, true, false, true], 0.2))
            .unwrap();
        let mut rng = Rng::new(17);
        let mut bg = Matrix::zeros(6, d);
        for v in bg.values_mut() {
            *v = rng.normal();
        }
        let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let sampled = shapley_sampled(&net, &x, &bg, 50, 11).unwrap();
        assert_eq!(sampled.values[1], 0.0);
        assert_eq!(sampled.values[3], 0.0);
        assert_eq!(sampled.standard_errors[1], 0.0);
        let exact = shapley_exact(&net, &x, &bg).unwrap();
        assert_eq!(exact[1], 0.0);
        assert_eq!(exact[3], 0.0);
        // mean absolute attribution inherits the exact zeros
        let samples = Matrix::from_values(2, d, [x.clone(), x].concat()).unwrap();
        let mean = mean_abs_attribution(
            &net,
            &samples,
            &bg,
            &AttributionConfig {
                estimator: AttributionEstimator::Sampled { n_permutations: 20 },
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(mean[1], 0.0);
        assert_eq!(mean[3], 0.0);
    }

    #[test]
    fn constant_model_mean_attribution_row_is_zero() {
        let model = FnModel {
            d: 3,
            f: |_: &[f64]| -1.5,
        };
        let bg = Matrix::zeros(2, 3);
        let samples = Matrix::from_values(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]).unwrap();
        let row = mean_abs_attribution(
            &model,
            &samples,
            &bg,
            &AttributionConfig {
                estimator: AttributionEstimator::Exact,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(row, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn attribution_matrix_csv_has_labels() {
        let m = AttributionMatrix::single_output(
            "y",
            vec!["a".into(), "b".into()],
            vec![0.5, 0.25],
            10,
            "background of 2 rows".into(),
        )
        .unwrap();
        let csv = m.to_csv();
        assert!(csv.starts_with("output,a,b\n"));
        assert!(csv.contains("y,0.5,0.25"));
    }
}
