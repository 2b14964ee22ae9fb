//! Accuracy, validation-based lower-bound estimators of test accuracy, and
//! bootstrap summaries.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{softmax_xent, Network};
use crate::rng::{rng_for, stream};
use crate::scalar::Scalar;

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const MIN_RESAMPLES: usize = 100;
/// Batch size for inference-only passes.
pub const EVAL_BATCH: usize = 500;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Loss and predictions of a network over a whole dataset.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub predictions: Vec<usize>,
    pub correct: Vec<bool>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        accuracy_of(&self.correct)
    }
}

/// Inference pass over `data` in chunks of `batch` samples.
pub fn evaluate_dataset<T: Scalar>(net: &Network<T>, data: &Dataset<T>, batch: usize) -> Result<Evaluation> {
    let n = data.len();
    let batch = batch.max(1);
    let mut predictions = Vec::with_capacity(n);
    let mut loss_sum = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let chunk = data.slice(start, end)?;
        let logits = net.infer(chunk.inputs())?;
        let (loss, _) = softmax_xent(&logits, chunk.labels())?;
        loss_sum += loss.as_f64() * (end - start) as f64;
        let k = logits.dim(1);
        predictions.extend(logits.data().chunks_exact(k).map(argmax));
        start = end;
    }
    let correct = predictions.iter().zip(data.labels()).map(|(p, y)| p == y).collect();
    Ok(Evaluation { loss: loss_sum / n as f64, predictions, correct })
}

pub fn accuracy_of(correct: &[bool]) -> f64 {
    if correct.is_empty() {
        return 0.0;
    }
    correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64
}

/// Fraction of samples whose argmax logit equals the label.
pub fn accuracy<T: Scalar>(net: &Network<T>, data: &Dataset<T>) -> Result<f64> {
    Ok(evaluate_dataset(net, data, EVAL_BATCH)?.accuracy())
}

/// `min(acc(first half), acc(second half))`, halves split at `floor(n / 2)`.
pub fn acc_min_two_halves(correct: &[bool]) -> Result<f64> {
    if correct.len() < 2 {
        return Err(Error::invalid("two-halves estimate needs at least 2 samples"));
    }
    let mid = correct.len() / 2;
    Ok(accuracy_of(&correct[..mid]).min(accuracy_of(&correct[mid..])))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    /// Coverage of the percentile interval.
    pub confidence: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { resamples: DEFAULT_RESAMPLES, seed: 0, confidence: 0.95 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub resamples: usize,
    pub mean: f64,
    /// Sample standard deviation of the resampled accuracies.
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
    pub seed: u64,
}

/// Accuracy over `resamples` draws with replacement of the correctness
/// vector. Resample `b` uses its own stream derived from `(seed, b)`; the
/// interval is nearest-rank at `(1 -/+ confidence) / 2`.
pub fn bootstrap(correct: &[bool], resamples: usize, seed: u64, confidence: f64) -> Result<BootstrapSummary> {
    if correct.is_empty() {
        return Err(Error::invalid("bootstrap needs a non-empty vector"));
    }
    if resamples < MIN_RESAMPLES {
        return Err(Error::invalid(format!("bootstrap needs at least {MIN_RESAMPLES} resamples, got {resamples}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(format!("confidence must be in (0, 1), got {confidence}")));
    }
    let n = correct.len();
    let mut accs: Vec<f64> = (0..resamples)
        .map(|b| {
            let mut rng = rng_for(seed, stream::BOOTSTRAP, b as u64);
            let hits = (0..n).filter(|_| correct[rng.gen_range(0..n)]).count();
            hits as f64 / n as f64
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / resamples as f64;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (resamples - 1) as f64;
    accs.sort_by(f64::total_cmp);
    let rank = |p: f64| {
        let r = (p * resamples as f64 - 1e-9).ceil() as usize;
        accs[r.clamp(1, resamples) - 1]
    };
    Ok(BootstrapSummary {
        resamples,
        mean,
        std: var.sqrt(),
        lower: rank((1.0 - confidence) / 2.0),
        upper: rank((1.0 + confidence) / 2.0),
        confidence,
        seed,
    })
}

/// Which lower-bound estimate of test accuracy drives checkpointing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Worse of the two validation halves.
    MinTwoHalves,
    /// Bootstrap mean minus one bootstrap standard deviation.
    BootstrapMeanMinusStd,
    /// `MinTwoHalves` minus one bootstrap standard deviation.
    Combined,
}

impl EstimatorKind {
    pub fn code(self) -> u8 {
        match self {
            EstimatorKind::MinTwoHalves => 1,
            EstimatorKind::BootstrapMeanMinusStd => 2,
            EstimatorKind::Combined => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(EstimatorKind::MinTwoHalves),
            2 => Ok(EstimatorKind::BootstrapMeanMinusStd),
            3 => Ok(EstimatorKind::Combined),
            other => Err(Error::invalid(format!("estimator kind must be 1, 2 or 3, got {other}"))),
        }
    }

    pub fn needs_bootstrap(self) -> bool {
        self != EstimatorKind::MinTwoHalves
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let code = s.trim().parse::<u8>().map_err(|_| Error::invalid(format!("bad estimator kind `{s}`")))?;
        Self::from_code(code)
    }
}

/// Expected test accuracy from a validation correctness vector.
pub fn expected_test_accuracy(kind: EstimatorKind, correct: &[bool], cfg: &BootstrapConfig) -> Result<f64> {
    match kind {
        EstimatorKind::MinTwoHalves => acc_min_two_halves(correct),
        EstimatorKind::BootstrapMeanMinusStd => {
            let s = bootstrap(correct, cfg.resamples, cfg.seed, cfg.confidence)?;
            Ok(s.mean - s.std)
        }
        EstimatorKind::Combined => {
            let s = bootstrap(correct, cfg.resamples, cfg.seed, cfg.confidence)?;
            Ok(acc_min_two_halves(correct)? - s.std)
        }
    }
}

/// [`expected_test_accuracy`] of a network on a validation set.
pub fn expected_accuracy<T: Scalar>(
    kind: EstimatorKind,
    net: &Network<T>,
    val: &Dataset<T>,
    cfg: &BootstrapConfig,
) -> Result<f64> {
    let eval = evaluate_dataset(net, val, EVAL_BATCH)?;
    expected_test_accuracy(kind, &eval.correct, cfg)
}
