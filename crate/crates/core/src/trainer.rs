//! Learning-rate staircase training.
//!
//! Each stage trains at one learning rate with a fresh ADAM state until the
//! expected test accuracy (estimated on the validation set) has not
//! strictly improved for `patience` epochs. The first stage starts from
//! freshly initialized parameters; every later stage starts from the
//! parameters saved at its predecessor's best epoch. Saving and patience
//! follow per-stage bookkeeping, and the best model over all stages is what
//! the run returns.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{batches, Dataset};
use crate::error::{Error, Result};
use crate::models::{init_params, Checkpoint};
use crate::nn::{flatten_param_grads, softmax_xent, Network, Tensor};
use crate::optim::AdamState;
use crate::rng::{derive_seed, stream};
use crate::scalar::Scalar;
use crate::stats::{bootstrap, evaluate_dataset, expected_test_accuracy, BootstrapConfig, BootstrapSummary, EstimatorKind, EVAL_BATCH};

pub const DEFAULT_STAGE_LRS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];
pub const DEFAULT_PATIENCE: usize = 10;
pub const DEFAULT_BATCH_SIZE: usize = 128;
pub const DEFAULT_STAGE_EPOCH_CAP: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage_lrs: Vec<f64>,
    pub patience: usize,
    pub batch_size: usize,
    pub estimator: EstimatorKind,
    /// Resample count for the bootstrap-based estimators. The resampling
    /// seed is derived from `seed` and held fixed across epochs.
    pub bootstrap_resamples: usize,
    pub seed: u64,
    pub max_epochs_per_stage: usize,
    /// Skip stages whose rate exceeds this value.
    pub start_lr: Option<f64>,
    /// Abort when the first stage's best expected accuracy is still at or
    /// below this value after `patience` epochs. `None` uses `1.5 / classes`.
    pub chance_level: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage_lrs: DEFAULT_STAGE_LRS.to_vec(),
            patience: DEFAULT_PATIENCE,
            batch_size: DEFAULT_BATCH_SIZE,
            estimator: EstimatorKind::MinTwoHalves,
            bootstrap_resamples: crate::stats::DEFAULT_RESAMPLES,
            seed: 0,
            max_epochs_per_stage: DEFAULT_STAGE_EPOCH_CAP,
            start_lr: None,
            chance_level: None,
        }
    }
}

impl TrainConfig {
    /// Stage rates after applying `start_lr`.
    pub fn stages(&self) -> Result<Vec<f64>> {
        if self.stage_lrs.is_empty() {
            return Err(Error::invalid("at least one stage learning rate is required"));
        }
        if self.stage_lrs.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid(format!("stage learning rates must strictly decrease: {:?}", self.stage_lrs)));
        }
        if self.stage_lrs.iter().any(|&lr| !(lr > 0.0)) {
            return Err(Error::invalid("stage learning rates must be positive"));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs_per_stage == 0 {
            return Err(Error::invalid("patience, batch size and epoch cap must be at least 1"));
        }
        let stages: Vec<f64> = match self.start_lr {
            Some(start) => self.stage_lrs.iter().copied().filter(|&lr| lr <= start * (1.0 + 1e-9)).collect(),
            None => self.stage_lrs.clone(),
        };
        if stages.is_empty() {
            return Err(Error::invalid(format!("no stage at or below start lr {:?}", self.start_lr)));
        }
        Ok(stages)
    }

    pub fn bootstrap_config(&self) -> BootstrapConfig {
        BootstrapConfig {
            resamples: self.bootstrap_resamples,
            seed: derive_seed(self.seed, stream::BOOTSTRAP, 0),
            confidence: 0.68,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based, counted across stages.
    pub epoch: usize,
    pub stage: usize,
    /// 1-based within the stage.
    pub stage_epoch: usize,
    pub stage_lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub acc_expected: f64,
    /// Strict improvement within the stage; the parameters were saved.
    pub is_best: bool,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub lr: f64,
    pub epochs: usize,
    /// Global epoch of the stage's best (saved) model, 0 if none.
    pub best_epoch: usize,
    pub best_expected: f64,
    pub aborted: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestModel {
    pub epoch: usize,
    pub stage: usize,
    pub stage_lr: f64,
    pub expected_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub stages: Vec<StageSummary>,
    pub best: BestModel,
    pub diagnostics: Vec<String>,
}

impl TrainReport {
    pub fn total_epochs(&self) -> usize {
        self.records.len()
    }

    pub fn final_record(&self) -> &EpochRecord {
        self.records.last().expect("a report holds at least one epoch")
    }

    /// Metrics CSV: `epoch,stage_lr,train_loss,train_acc,val_loss,val_acc,acc_expected,is_best,seconds`.
    /// With `with_timing` off the `seconds` column is left empty so that
    /// repeated runs produce identical files.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut out = String::from("epoch,stage_lr,train_loss,train_acc,val_loss,val_acc,acc_expected,is_best,seconds\n");
        for r in &self.records {
            let secs = if with_timing { format!("{:.3}", r.seconds) } else { String::new() };
            out.push_str(&format!(
                "{},{:e},{},{},{},{},{},{},{}\n",
                r.epoch,
                r.stage_lr,
                r.train_loss,
                r.train_acc,
                r.val_loss,
                r.val_acc,
                r.acc_expected,
                r.is_best as u8,
                secs
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, with_timing: bool) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv(with_timing).as_bytes()).map_err(|e| Error::io(path, e))
    }
}

enum EpochOutcome {
    Done,
    NonFinite(String),
}

/// One pass over `train` in seeded mini-batches.
fn train_epoch<T: Scalar>(
    net: &mut Network<T>,
    adam: &mut AdamState<T>,
    train: &Dataset<T>,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<EpochOutcome> {
    for idx in batches(train.len(), batch_size, seed, epoch)? {
        let (x, y) = train.batch(&idx)?;
        let logits = net.forward(&x)?;
        let (loss, grad) = softmax_xent(&logits, &y)?;
        if !loss.is_finite() {
            net.clear_cache();
            return Ok(EpochOutcome::NonFinite(format!("loss {loss} at epoch {epoch}")));
        }
        let grads = flatten_param_grads(net.backward(&grad)?);
        match adam.step(&mut net.params_mut(), &grads) {
            Ok(()) => {}
            Err(Error::NonFinite(what)) => return Ok(EpochOutcome::NonFinite(format!("{what} at epoch {epoch}"))),
            Err(e) => return Err(e),
        }
    }
    Ok(EpochOutcome::Done)
}

/// Staircase training. On success `net` holds the best parameters over all
/// stages.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    train_set: &Dataset<T>,
    val_set: &Dataset<T>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    let stages = config.stages()?;
    if train_set.sample_shape() != net.input_shape() || val_set.sample_shape() != net.input_shape() {
        return Err(Error::shape(format!(
            "network `{}` takes {:?}, data has {:?} / {:?}",
            net.name(),
            net.input_shape(),
            train_set.sample_shape(),
            val_set.sample_shape()
        )));
    }
    let chance = config.chance_level.unwrap_or(1.5 / val_set.num_classes() as f64);
    let boot = config.bootstrap_config();
    let shapes = net.param_shapes();

    let mut records = Vec::new();
    let mut summaries = Vec::new();
    let mut diagnostics = Vec::new();
    let mut saved: Option<Vec<Tensor<T>>> = None;
    let mut global: Option<(Vec<Tensor<T>>, BestModel)> = None;

    for (stage, &lr) in stages.iter().enumerate() {
        let mut adam = AdamState::<T>::new(&shapes, lr)?;
        match (&saved, stage) {
            (_, 0) => init_params(net, config.seed),
            (Some(params), _) => net.restore(params)?,
            (None, _) => unreachable!("later stages only run after a save"),
        }
        let mut best_acc = 0.0;
        let mut best_epoch = 0;
        let mut summary = StageSummary { lr, epochs: 0, best_epoch: 0, best_expected: 0.0, aborted: None };

        for stage_epoch in 1..=config.max_epochs_per_stage {
            let epoch = records.len() + 1;
            let started = Instant::now();
            debug_assert!(stage_epoch > 1 || adam.is_pristine());
            let outcome = train_epoch(net, &mut adam, train_set, config.batch_size, config.seed, epoch as u64)?;
            if let EpochOutcome::NonFinite(what) = outcome {
                let msg = format!("stage {stage} (lr {lr:e}) aborted: non-finite {what}");
                log::warn!("{msg}");
                diagnostics.push(msg.clone());
                summary.aborted = Some(msg);
                break;
            }
            let tr = evaluate_dataset(net, train_set, EVAL_BATCH)?;
            let va = evaluate_dataset(net, val_set, EVAL_BATCH)?;
            let expected = expected_test_accuracy(config.estimator, &va.correct, &boot)?;
            let improved = expected > best_acc;
            if improved {
                best_acc = expected;
                best_epoch = stage_epoch;
                saved = Some(net.snapshot());
                summary.best_epoch = epoch;
                summary.best_expected = expected;
            }
            if global.as_ref().is_none_or(|(_, b)| expected > b.expected_accuracy) {
                let info = BestModel { epoch, stage, stage_lr: lr, expected_accuracy: expected };
                global = Some((net.snapshot(), info));
            }
            let record = EpochRecord {
                epoch,
                stage,
                stage_epoch,
                stage_lr: lr,
                train_loss: tr.loss,
                train_acc: tr.accuracy(),
                val_loss: va.loss,
                val_acc: va.accuracy(),
                acc_expected: expected,
                is_best: improved,
                seconds: started.elapsed().as_secs_f64(),
            };
            log::info!(
                "epoch {epoch} lr {lr:e} loss {:.4} train {:.4} val {:.4} expected {:.4}{} ({:.1}s)",
                record.train_loss,
                record.train_acc,
                record.val_acc,
                expected,
                if improved { " *" } else { "" },
                record.seconds
            );
            records.push(record);
            summary.epochs += 1;

            if stage == 0 && stage_epoch == config.patience.min(config.max_epochs_per_stage) && best_acc <= chance {
                return Err(Error::LrTooHigh { lr, best: best_acc, epochs: stage_epoch });
            }
            if stage_epoch > best_epoch + config.patience {
                break;
            }
        }
        summaries.push(summary);
        if saved.is_none() {
            return Err(Error::NonFinite(format!(
                "training diverged before any model was saved: {}",
                diagnostics.join("; ")
            )));
        }
    }

    let (params, best) = global.expect("at least one epoch was evaluated");
    net.restore(&params)?;
    net.clear_cache();
    Ok(TrainReport { records, stages: summaries, best, diagnostics })
}

/// Fixed-length single-rate training without early stopping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimpleConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SimpleConfig {
    fn default() -> Self {
        SimpleConfig { epochs: 1000, lr: 1e-3, batch_size: 32, seed: 0 }
    }
}

/// Trains for exactly `config.epochs` epochs from fresh parameters and
/// leaves the last-epoch parameters in `net`. Records carry full-set train
/// and validation metrics; `acc_expected` holds the validation accuracy.
pub fn train_simple<T: Scalar>(
    net: &mut Network<T>,
    train_set: &Dataset<T>,
    val_set: &Dataset<T>,
    config: &SimpleConfig,
) -> Result<TrainReport> {
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::invalid("epochs and batch size must be at least 1"));
    }
    init_params(net, config.seed);
    let mut adam = AdamState::<T>::new(&net.param_shapes(), config.lr)?;
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<BestModel> = None;
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        if let EpochOutcome::NonFinite(what) =
            train_epoch(net, &mut adam, train_set, config.batch_size, config.seed, epoch as u64)?
        {
            return Err(Error::NonFinite(what));
        }
        let tr = evaluate_dataset(net, train_set, EVAL_BATCH)?;
        let va = evaluate_dataset(net, val_set, EVAL_BATCH)?;
        let improved = best.as_ref().is_none_or(|b| va.accuracy() > b.expected_accuracy);
        if improved {
            best = Some(BestModel { epoch, stage: 0, stage_lr: config.lr, expected_accuracy: va.accuracy() });
        }
        records.push(EpochRecord {
            epoch,
            stage: 0,
            stage_epoch: epoch,
            stage_lr: config.lr,
            train_loss: tr.loss,
            train_acc: tr.accuracy(),
            val_loss: va.loss,
            val_acc: va.accuracy(),
            acc_expected: va.accuracy(),
            is_best: improved,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    net.clear_cache();
    let stage = StageSummary {
        lr: config.lr,
        epochs: config.epochs,
        best_epoch: best.as_ref().map_or(0, |b| b.epoch),
        best_expected: best.as_ref().map_or(0.0, |b| b.expected_accuracy),
        aborted: None,
    };
    Ok(TrainReport { records, stages: vec![stage], best: best.expect("epochs >= 1"), diagnostics: Vec::new() })
}

/// Accuracy on `data` with a percentile bootstrap interval.
pub fn evaluate_network<T: Scalar>(
    net: &Network<T>,
    data: &Dataset<T>,
    cfg: &BootstrapConfig,
) -> Result<(f64, BootstrapSummary)> {
    let eval = evaluate_dataset(net, data, EVAL_BATCH)?;
    let summary = bootstrap(&eval.correct, cfg.resamples, cfg.seed, cfg.confidence)?;
    Ok((eval.accuracy(), summary))
}

/// Loads a checkpoint against its recorded architecture and evaluates it.
pub fn evaluate<T: Scalar>(
    checkpoint: &Checkpoint<T>,
    data: &Dataset<T>,
    cfg: &BootstrapConfig,
) -> Result<(f64, BootstrapSummary)> {
    evaluate_network(&checkpoint.to_network()?, data, cfg)
}
