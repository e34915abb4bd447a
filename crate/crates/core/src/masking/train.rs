use std::fmt::Write as _;

use crate::data::{epoch_batches, eval_batches, Dataset};
use crate::masking::{
    binarize, build_threshold_grid, extract_mask_vector, BinaryMask, MaskingError, ThresholdGrid,
};
use crate::nn::{backward, AdamState, LrSchedule, Network, NetworkArch};
use crate::rng::{derive_seed, stream};

/// Hyper-parameters of the two training phases.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// Sparsity weight of the pre-mask objective.
    pub lambda: f64,
    pub epochs_premask: usize,
    pub epochs_mask: usize,
    pub lr_schedule: LrSchedule,
    pub train_batch: usize,
    pub eval_batch: usize,
    pub seed: u64,
    pub n_thresholds: usize,
}

impl Default for TrainingConfig {
    /// lambda 0.001, 9 + 9 epochs, lr 0.001 divided by five every three
    /// epochs, batches 1024/8192, seed 42, 20 thresholds.
    fn default() -> Self {
        TrainingConfig {
            lambda: 0.001,
            epochs_premask: 9,
            epochs_mask: 9,
            lr_schedule: LrSchedule::default(),
            train_batch: 1024,
            eval_batch: 8192,
            seed: 42,
            n_thresholds: 20,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), MaskingError> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(MaskingError::InvalidConfig(format!(
                "lambda {} must be a nonnegative real",
                self.lambda
            )));
        }
        for (value, name) in [
            (self.epochs_premask, "epochs_premask"),
            (self.epochs_mask, "epochs_mask"),
            (self.train_batch, "train_batch"),
            (self.eval_batch, "eval_batch"),
            (self.n_thresholds, "n_thresholds"),
        ] {
            if value == 0 {
                return Err(MaskingError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        LrSchedule::new(
            self.lr_schedule.initial_lr,
            self.lr_schedule.decay_factor,
            self.lr_schedule.decay_every,
        )?;
        Ok(())
    }
}

/// A trained network plus its per-epoch training-loss history (mean of
/// the optimized objective over the epoch's batches, sample weighted).
#[derive(Debug, Clone)]
pub struct TrainedNetwork {
    pub network: Network,
    pub loss_history: Vec<f64>,
}

/// The optimizer loop shared by both phases. `base_seed` drives the
/// per-epoch batch shuffles; the LR schedule restarts at epoch 0.
fn run_training(
    net: &mut Network,
    dataset: &Dataset,
    epochs: usize,
    lambda: f64,
    cfg: &TrainingConfig,
    base_seed: u64,
) -> Result<Vec<f64>, MaskingError> {
    let mut adam = AdamState::new_for(net);
    let mut history = Vec::with_capacity(epochs);
    let n = dataset.len() as f64;
    for epoch in 0..epochs {
        let lr = cfg.lr_schedule.lr_at_epoch(epoch);
        let mut epoch_loss = 0.0;
        for (batch_index, (x, y)) in
            epoch_batches(dataset, cfg.train_batch, base_seed, epoch).enumerate()
        {
            let (loss, grads) = backward(net, &x, &y, lambda)?;
            if !loss.total.is_finite() {
                return Err(MaskingError::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            adam.apply(net, &grads, lr)?;
            epoch_loss += loss.total * x.rows() as f64;
        }
        history.push(epoch_loss / n);
    }
    Ok(history)
}

/// Phase one: train a fresh pre-mask network on the L1-penalized
/// objective for `epochs_premask` epochs.
pub fn train_premask(
    dataset: &Dataset,
    arch: &NetworkArch,
    cfg: &TrainingConfig,
) -> Result<TrainedNetwork, MaskingError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(MaskingError::InvalidConfig(
            "cannot train on an empty dataset".into(),
        ));
    }
    let init_seed = derive_seed(cfg.seed, stream::NETWORK_INIT);
    let mut net = Network::premask(dataset.input_dim(), arch, init_seed)?;
    let history = run_training(
        &mut net,
        dataset,
        cfg.epochs_premask,
        cfg.lambda,
        cfg,
        cfg.seed,
    )?;
    Ok(TrainedNetwork {
        network: net,
        loss_history: history,
    })
}

/// Phase two: fine-tune in mask mode for `epochs_mask` epochs. The mask
/// network warm-starts from the pre-mask hidden/output stack (the input
/// kernel has no counterpart and is dropped) and trains on plain MSE.
pub fn train_mask(
    premask_net: &Network,
    mask: BinaryMask,
    dataset: &Dataset,
    cfg: &TrainingConfig,
) -> Result<TrainedNetwork, MaskingError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(MaskingError::InvalidConfig(
            "cannot train on an empty dataset".into(),
        ));
    }
    if mask.selected_count() == 0 {
        log::warn!(
            "all-zero mask at threshold {}: fine-tuning proceeds on the bias-only signal",
            mask.threshold()
        );
    }
    let mut net = premask_net.to_mask_mode(mask)?;
    let history = run_training(&mut net, dataset, cfg.epochs_mask, 0.0, cfg, cfg.seed)?;
    Ok(TrainedNetwork {
        network: net,
        loss_history: history,
    })
}

/// Mean squared error of a network over a whole dataset, evaluated in
/// `eval_batch`-sized chunks.
pub fn dataset_mse(
    net: &Network,
    dataset: &Dataset,
    eval_batch: usize,
) -> Result<f64, MaskingError> {
    let mut sum = 0.0;
    for (x, y) in eval_batches(dataset, eval_batch) {
        let preds = net.forward(&x)?;
        sum += preds
            .iter()
            .zip(&y)
            .map(|(p, t)| (t - p) * (t - p))
            .sum::<f64>();
    }
    Ok(sum / dataset.len().max(1) as f64)
}

/// Statistics of one fine-tuning run in the sweep.
#[derive(Debug, Clone)]
pub struct SweepRunStats {
    pub network: Network,
    pub loss_history: Vec<f64>,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
}

/// One sweep record: the threshold, its mask, and either run statistics
/// or the error that run produced.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub threshold: f64,
    pub mask: BinaryMask,
    pub outcome: Result<SweepRunStats, String>,
}

impl SweepRecord {
    pub fn selected_count(&self) -> usize {
        self.mask.selected_count()
    }
}

/// All sweep records plus the grid they came from.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub grid: ThresholdGrid,
    pub records: Vec<SweepRecord>,
}

impl SweepResult {
    /// CSV with one row per record.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("index,threshold,selected_count,bits,final_train_loss,final_val_loss,status\n");
        for (i, rec) in self.records.iter().enumerate() {
            let bits: String = rec
                .mask
                .bits()
                .iter()
                .map(|&b| if b { '1' } else { '0' })
                .collect();
            match &rec.outcome {
                Ok(stats) => writeln!(
                    out,
                    "{i},{},{},{bits},{},{},ok",
                    rec.threshold,
                    rec.selected_count(),
                    stats.final_train_loss,
                    stats.final_val_loss
                )
                .expect("string write"),
                Err(message) => writeln!(
                    out,
                    "{i},{},{},{bits},,,error: {}",
                    rec.threshold,
                    rec.selected_count(),
                    message.replace(',', ";")
                )
                .expect("string write"),
            }
        }
        out
    }
}

/// Seed for sweep run `index`: a stream derived from the base seed and
/// the threshold index, so runs are independent and order-insensitive.
pub fn sweep_run_seed(base_seed: u64, index: usize) -> u64 {
    derive_seed(derive_seed(base_seed, stream::SWEEP_RUN), index as u64)
}

/// Fine-tune one mask network per grid threshold. Every run restarts
/// from the same pre-mask snapshot with its own derived seed; failures
/// are recorded per threshold without aborting the sweep. `jobs` bounds
/// the number of worker threads (runs are independent).
pub fn sweep_thresholds(
    premask_net: &Network,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainingConfig,
    jobs: usize,
) -> Result<SweepResult, MaskingError> {
    cfg.validate()?;
    let m = extract_mask_vector(premask_net)?;
    let grid = build_threshold_grid(&m, cfg.n_thresholds)?;

    let run_one = |index: usize, threshold: f64| -> SweepRecord {
        let mask = binarize(&m, threshold);
        let mut run_cfg = cfg.clone();
        run_cfg.seed = sweep_run_seed(cfg.seed, index);
        let outcome = train_mask(premask_net, mask.clone(), train, &run_cfg)
            .and_then(|trained| {
                let final_train_loss = dataset_mse(&trained.network, train, cfg.eval_batch)?;
                let final_val_loss = dataset_mse(&trained.network, val, cfg.eval_batch)?;
                Ok(SweepRunStats {
                    network: trained.network,
                    loss_history: trained.loss_history,
                    final_train_loss,
                    final_val_loss,
                })
            })
            .map_err(|e| e.to_string());
        SweepRecord {
            threshold,
            mask,
            outcome,
        }
    };

    let thresholds = grid.thresholds().to_vec();
    let jobs = jobs.max(1).min(thresholds.len().max(1));
    let mut records: Vec<Option<SweepRecord>> = (0..thresholds.len()).map(|_| None).collect();
    if jobs == 1 {
        for (i, &t) in thresholds.iter().enumerate() {
            records[i] = Some(run_one(i, t));
        }
    } else {
        // Round-robin partition; each worker owns its indices, results
        // are reassembled in grid order so the output is identical to
        // the sequential run.
        let mut worker_results: Vec<Vec<(usize, SweepRecord)>> = Vec::new();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..jobs {
                let thresholds = &thresholds;
                let run_one = &run_one;
                handles.push(scope.spawn(move || {
                    thresholds
                        .iter()
                        .enumerate()
                        .skip(w)
                        .step_by(jobs)
                        .map(|(i, &t)| (i, run_one(i, t)))
                        .collect::<Vec<_>>()
                }));
            }
            for h in handles {
                worker_results.push(h.join().expect("sweep worker panicked"));
            }
        });
        for (i, rec) in worker_results.into_iter().flatten() {
            records[i] = Some(rec);
        }
    }

    Ok(SweepResult {
        grid,
        records: records
            .into_iter()
            .map(|r| r.expect("every grid index was run"))
            .collect(),
    })
}

/// Pick the record with the lowest final training loss among successful
/// runs; exact ties go to the larger threshold (fewer inputs).
pub fn select_best(sweep: &SweepResult) -> Result<&SweepRecord, MaskingError> {
    let mut best: Option<(&SweepRecord, f64)> = None;
    for rec in &sweep.records {
        let Ok(stats) = &rec.outcome else { continue };
        let loss = stats.final_train_loss;
        best = match best {
            None => Some((rec, loss)),
            Some((cur, cur_loss)) => {
                if loss < cur_loss || (loss == cur_loss && rec.threshold > cur.threshold) {
                    Some((rec, loss))
                } else {
                    Some((cur, cur_loss))
                }
            }
        };
    }
    best.map(|(rec, _)| rec).ok_or(MaskingError::EmptySweep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Mechanism, SyntheticSpec};
    use crate::masking::MaskVector;

    fn desk_config() -> TrainingConfig {
        TrainingConfig {
            train_batch: 64,
            eval_batch: 512,
            ..TrainingConfig::default()
        }
    }

    fn linear_dataset(d: usize, drivers: &[usize], n: usize, noise: f64, seed: u64) -> Dataset {
        generate_synthetic(&SyntheticSpec {
            d,
            n_samples: n,
            drivers: drivers.iter().copied().collect(),
            mechanism: Mechanism::SparseLinear,
            spurious_corr: 0.0,
            noise_std: noise,
            shift: 0.0,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn noiseless_linear_target_is_learned() {
        // lambda = 0 on a 2-feature noiseless linear target: the fit
        // reaches small training error after 18 epochs at desk scale.
        let ds = linear_dataset(2, &[0, 1], 2000, 0.0, 3);
        let mut cfg = desk_config();
        cfg.lambda = 0.0;
        cfg.epochs_premask = 18;
        let arch = NetworkArch::new(vec![16], 0.3);
        let trained = train_premask(&ds, &arch, &cfg).unwrap();
        let final_mse = dataset_mse(&trained.network, &ds, cfg.eval_batch).unwrap();
        assert!(final_mse < 1e-3, "final train mse {final_mse}");
        assert_eq!(trained.loss_history.len(), 18);
        assert!(trained.loss_history.last().unwrap() <= trained.loss_history.first().unwrap());
    }

    #[test]
    fn large_lambda_shrinks_irrelevant_columns_more() {
        let ds = linear_dataset(6, &[0], 4000, 0.05, 11);
        let arch = NetworkArch::new(vec![8], 0.3);
        let run = |lambda: f64| {
            let mut cfg = desk_config();
            cfg.lambda = lambda;
            let trained = train_premask(&ds, &arch, &cfg).unwrap();
            let m = extract_mask_vector(&trained.network).unwrap();
            // mean norm over the five non-driver columns
            m.values()[1..].iter().sum::<f64>() / 5.0
        };
        let heavy = run(1.0);
        let light = run(0.001);
        assert!(
            heavy < light,
            "heavy-penalty norms {heavy} should be below light-penalty norms {light}"
        );
    }

    #[test]
    fn mask_zeroing_the_only_driver_floors_performance() {
        let ds = linear_dataset(3, &[1], 3000, 0.0, 5);
        let mut cfg = desk_config();
        cfg.epochs_premask = 3;
        let arch = NetworkArch::new(vec![8], 0.3);
        let premask = train_premask(&ds, &arch, &cfg).unwrap();
        let mask = BinaryMask::new(vec![true, false, true], 0.5);
        let trained = train_mask(&premask.network, mask, &ds, &cfg).unwrap();
        let preds_mse = dataset_mse(&trained.network, &ds, cfg.eval_batch).unwrap();
        let var = {
            let mean = ds.y().iter().sum::<f64>() / ds.len() as f64;
            ds.y().iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / ds.len() as f64
        };
        let r2 = 1.0 - preds_mse / var;
        assert!(r2.abs() < 0.15, "r2 without the driver is {r2}");
    }

    #[test]
    fn training_is_restart_deterministic() {
        let ds = linear_dataset(4, &[0, 2], 1000, 0.1, 8);
        let cfg = desk_config();
        let arch = NetworkArch::new(vec![8], 0.3);
        let a = train_premask(&ds, &arch, &cfg).unwrap();
        let b = train_premask(&ds, &arch, &cfg).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn sweep_single_threshold_has_single_record() {
        let ds = linear_dataset(4, &[0, 1], 800, 0.05, 2);
        let (train, val) = (ds.clone(), ds);
        let mut cfg = desk_config();
        cfg.epochs_premask = 2;
        cfg.epochs_mask = 2;
        cfg.n_thresholds = 1;
        let arch = NetworkArch::new(vec![6], 0.3);
        let premask = train_premask(&train, &arch, &cfg).unwrap();
        let sweep = sweep_thresholds(&premask.network, &train, &val, &cfg, 1).unwrap();
        assert_eq!(sweep.records.len(), 1);
        assert_eq!(sweep.records[0].threshold, 0.0001);
        assert!(sweep.records[0].outcome.is_ok());
    }

    #[test]
    fn sweep_is_deterministic_and_parallel_invariant() {
        let ds = linear_dataset(5, &[0, 3], 1200, 0.05, 4);
        let (train, val) = (ds.clone(), ds);
        let mut cfg = desk_config();
        cfg.epochs_premask = 2;
        cfg.epochs_mask = 2;
        cfg.n_thresholds = 4;
        let arch = NetworkArch::new(vec![6], 0.3);
        let premask = train_premask(&train, &arch, &cfg).unwrap();
        let a = sweep_thresholds(&premask.network, &train, &val, &cfg, 1).unwrap();
        let b = sweep_thresholds(&premask.network, &train, &val, &cfg, 3).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.threshold, rb.threshold);
            assert_eq!(ra.mask, rb.mask);
            let (sa, sb) = (ra.outcome.as_ref().unwrap(), rb.outcome.as_ref().unwrap());
            assert_eq!(sa.final_train_loss, sb.final_train_loss);
            assert_eq!(sa.final_val_loss, sb.final_val_loss);
            assert_eq!(sa.network, sb.network);
        }
    }

    #[test]
    fn sweep_mask_bits_are_monotone_in_threshold() {
        let ds = linear_dataset(6, &[1, 4], 1000, 0.05, 6);
        let (train, val) = (ds.clone(), ds);
        let mut cfg = desk_config();
        cfg.epochs_premask = 2;
        cfg.epochs_mask = 1;
        cfg.n_thresholds = 6;
        let arch = NetworkArch::new(vec![6], 0.3);
        let premask = train_premask(&train, &arch, &cfg).unwrap();
        let sweep = sweep_thresholds(&premask.network, &train, &val, &cfg, 1).unwrap();
        for pair in sweep.records.windows(2) {
            for (lo, hi) in pair[0].mask.bits().iter().zip(pair[1].mask.bits()) {
                assert!(*lo || !*hi);
            }
        }
    }

    #[test]
    fn select_best_prefers_larger_threshold_on_ties() {
        let mk = |threshold: f64, loss: f64| SweepRecord {
            threshold,
            mask: BinaryMask::new(vec![true], threshold),
            outcome: Ok(SweepRunStats {
                network: Network::premask(1, &NetworkArch::new(vec![2], 0.3), 0)
                    .unwrap()
                    .to_mask_mode(BinaryMask::new(vec![true], threshold))
                    .unwrap(),
                loss_history: vec![loss],
                final_train_loss: loss,
                final_val_loss: loss,
            }),
        };
        let grid = build_threshold_grid(&MaskVector::new(vec![0.5; 4]).unwrap(), 2).unwrap();
        let sweep = SweepResult {
            grid,
            records: vec![mk(0.1, 0.5), mk(0.2, 0.5), mk(0.15, 0.7)],
        };
        assert_eq!(select_best(&sweep).unwrap().threshold, 0.2);
    }

    #[test]
    fn select_best_skips_failed_records_and_errors_when_all_fail() {
        let grid = build_threshold_grid(&MaskVector::new(vec![0.5; 4]).unwrap(), 2).unwrap();
        let failed = SweepRecord {
            threshold: 0.1,
            mask: BinaryMask::new(vec![true], 0.1),
            outcome: Err("boom".into()),
        };
        let sweep = SweepResult {
            grid,
            records: vec![failed],
        };
        assert!(matches!(select_best(&sweep), Err(MaskingError::EmptySweep)));
    }
}
