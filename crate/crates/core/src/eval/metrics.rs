use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::eval::EvalError;
use crate::masking::BinaryMask;

/// Coefficient of determination and mean squared error. `r2` is `None`
/// when the targets have zero variance (the ratio is undefined).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct R2Report {
    pub r2: Option<f64>,
    pub mse: f64,
    pub n: usize,
    pub target_name: String,
}

/// `1 - RSS/TSS`; may be negative for predictors worse than the mean.
pub fn r2(predictions: &[f64], targets: &[f64], target_name: &str) -> Result<R2Report, EvalError> {
    if predictions.len() != targets.len() {
        return Err(EvalError::Shape(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if targets.len() < 2 {
        return Err(EvalError::TooFewSamples {
            required: 2,
            actual: targets.len(),
        });
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let rss: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (y - p) * (y - p))
        .sum();
    let tss: f64 = targets.iter().map(|y| (y - mean) * (y - mean)).sum();
    Ok(R2Report {
        r2: if tss > 0.0 { Some(1.0 - rss / tss) } else { None },
        mse: rss / n,
        n: targets.len(),
        target_name: target_name.to_string(),
    })
}

/// Per-group aggregate of a profile report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileGroup {
    pub group: usize,
    pub n: usize,
    pub mean_prediction: f64,
    pub mean_target: f64,
    /// `None` for groups whose targets have zero variance.
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileReport {
    pub groups: Vec<ProfileGroup>,
}

impl ProfileReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,count,mean_prediction,mean_target,r2\n");
        for g in &self.groups {
            writeln!(
                out,
                "{},{},{},{},{}",
                g.group,
                g.n,
                g.mean_prediction,
                g.mean_target,
                g.r2.map(|v| v.to_string()).unwrap_or_default()
            )
            .expect("string write");
        }
        out
    }
}

/// Group-averaged predictions, truths, and per-group R². `group_ids`
/// assigns every sample to a group (the partition must cover all
/// samples by construction).
pub fn profile_report(
    predictions: &[f64],
    targets: &[f64],
    group_ids: &[usize],
) -> Result<ProfileReport, EvalError> {
    if predictions.len() != targets.len() || predictions.len() != group_ids.len() {
        return Err(EvalError::Shape(format!(
            "lengths differ: {} predictions, {} targets, {} group ids",
            predictions.len(),
            targets.len(),
            group_ids.len()
        )));
    }
    if predictions.is_empty() {
        return Err(EvalError::TooFewSamples {
            required: 1,
            actual: 0,
        });
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &g) in group_ids.iter().enumerate() {
        members.entry(g).or_default().push(i);
    }
    let groups = members
        .into_iter()
        .map(|(group, idx)| {
            let n = idx.len() as f64;
            let mean_prediction = idx.iter().map(|&i| predictions[i]).sum::<f64>() / n;
            let mean_target = idx.iter().map(|&i| targets[i]).sum::<f64>() / n;
            let rss: f64 = idx
                .iter()
                .map(|&i| (targets[i] - predictions[i]) * (targets[i] - predictions[i]))
                .sum();
            let tss: f64 = idx
                .iter()
                .map(|&i| (targets[i] - mean_target) * (targets[i] - mean_target))
                .sum();
            ProfileGroup {
                group,
                n: idx.len(),
                mean_prediction,
                mean_target,
                r2: if tss > 0.0 { Some(1.0 - rss / tss) } else { None },
            }
        })
        .collect();
    Ok(ProfileReport { groups })
}

/// Precision/recall of a selected driver set against the ground truth.
/// Empty denominators are flagged as `None` rather than forced to a
/// number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriverRecoveryReport {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub selected: BTreeSet<usize>,
    pub truth: BTreeSet<usize>,
}

pub fn driver_recovery(selected: &BinaryMask, truth: &BTreeSet<usize>) -> DriverRecoveryReport {
    let selected: BTreeSet<usize> = selected.selected_indices().into_iter().collect();
    let hits = selected.intersection(truth).count() as f64;
    DriverRecoveryReport {
        precision: (!selected.is_empty()).then(|| hits / selected.len() as f64),
        recall: (!truth.is_empty()).then(|| hits / truth.len() as f64),
        selected,
        truth: truth.clone(),
    }
}
