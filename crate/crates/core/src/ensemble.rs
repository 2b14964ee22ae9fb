//! Multi-seed campaigns, hard majority voting and run-to-run instability.

use serde::{Deserialize, Serialize};

use crate::data::{split_train_val, synth_dataset, Dataset, SplitSpec, SynthKind, DEFAULT_SYNTH_SIZE};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, SimpleNet};
use crate::nn::Network;
use crate::scalar::Scalar;
use crate::stats::{accuracy_of, evaluate_dataset, EstimatorKind, EVAL_BATCH};
use crate::trainer::{train, train_simple, SimpleConfig, TrainConfig, TrainReport};

pub const DEFAULT_MEMBERS: usize = 20;
pub const DEFAULT_INSTABILITY_THRESHOLD: f64 = 0.8;

/// Per-sample modal label over `predictions[member][sample]`; ties go to
/// the lowest label.
pub fn majority_vote(predictions: &[Vec<usize>]) -> Result<Vec<usize>> {
    let first = predictions.first().ok_or_else(|| Error::invalid("majority vote needs at least one member"))?;
    let n = first.len();
    if let Some(p) = predictions.iter().find(|p| p.len() != n) {
        return Err(Error::shape(format!("member predictions of length {} and {n}", p.len())));
    }
    let classes = predictions.iter().flatten().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; classes];
    Ok((0..n)
        .map(|s| {
            counts.iter_mut().for_each(|c| *c = 0);
            for p in predictions {
                counts[p[s]] += 1;
            }
            // max_by_key keeps the last maximum, so scan labels in reverse
            (0..classes).rev().max_by_key(|&c| counts[c]).unwrap()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberResult {
    pub seed: u64,
    pub test_accuracy: Option<f64>,
    pub total_epochs: Option<usize>,
    pub best_expected: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub model: String,
    pub estimator: EstimatorKind,
    pub requested_members: usize,
    pub member_seeds: Vec<u64>,
    pub members: Vec<MemberResult>,
    /// Over the members that finished.
    pub majority_vote_accuracy: Option<f64>,
    pub accuracy_min: Option<f64>,
    pub accuracy_max: Option<f64>,
    pub complete: bool,
}

impl EnsembleReport {
    /// Assembles the report from finished members' test predictions.
    pub fn from_members(
        model: impl Into<String>,
        estimator: EstimatorKind,
        members: Vec<MemberResult>,
        predictions: &[Vec<usize>],
        labels: &[usize],
    ) -> Result<Self> {
        let accs: Vec<f64> = members.iter().filter_map(|m| m.test_accuracy).collect();
        let majority_vote_accuracy = if predictions.is_empty() {
            None
        } else {
            let votes = majority_vote(predictions)?;
            if votes.len() != labels.len() {
                return Err(Error::shape(format!("{} votes for {} labels", votes.len(), labels.len())));
            }
            let correct: Vec<bool> = votes.iter().zip(labels).map(|(a, b)| a == b).collect();
            Some(accuracy_of(&correct))
        };
        Ok(EnsembleReport {
            model: model.into(),
            estimator,
            requested_members: members.len(),
            member_seeds: members.iter().map(|m| m.seed).collect(),
            complete: members.iter().all(|m| m.error.is_none()),
            majority_vote_accuracy,
            accuracy_min: accs.iter().copied().reduce(f64::min),
            accuracy_max: accs.iter().copied().reduce(f64::max),
            members,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub model: String,
    pub members: usize,
    pub base_seed: u64,
    /// `seed` is replaced by `base_seed + i` for member `i`.
    pub train: TrainConfig,
}

/// Trains `config.members` independent runs and votes on `test`. A failed
/// member is recorded and the campaign continues. `on_member` sees every
/// finished member (for writing its artifacts); an error from it counts as
/// that member's failure.
pub fn train_ensemble<T: Scalar>(
    config: &EnsembleConfig,
    train_set: &Dataset<T>,
    val_set: &Dataset<T>,
    test_set: &Dataset<T>,
    mut on_member: impl FnMut(usize, &Network<T>, &TrainReport) -> Result<()>,
) -> Result<EnsembleReport> {
    if config.members == 0 {
        return Err(Error::invalid("an ensemble needs at least one member"));
    }
    let spec: ModelSpec = config.model.parse()?;
    let mut members = Vec::with_capacity(config.members);
    let mut predictions = Vec::new();
    for i in 0..config.members {
        let seed = config.base_seed.wrapping_add(i as u64);
        let tc = TrainConfig { seed, ..config.train.clone() };
        let mut run = || -> Result<(Vec<usize>, f64, TrainReport)> {
            let mut net = spec.build::<T>()?;
            let report = train(&mut net, train_set, val_set, &tc)?;
            let eval = evaluate_dataset(&net, test_set, EVAL_BATCH)?;
            on_member(i, &net, &report)?;
            let acc = eval.accuracy();
            Ok((eval.predictions, acc, report))
        };
        match run() {
            Ok((pred, acc, report)) => {
                log::info!("member {i} (seed {seed}): test accuracy {acc:.4}");
                predictions.push(pred);
                members.push(MemberResult {
                    seed,
                    test_accuracy: Some(acc),
                    total_epochs: Some(report.total_epochs()),
                    best_expected: Some(report.best.expected_accuracy),
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("member {i} (seed {seed}) failed: {e}");
                members.push(MemberResult {
                    seed,
                    test_accuracy: None,
                    total_epochs: None,
                    best_expected: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    EnsembleReport::from_members(spec.to_string(), config.train.estimator, members, &predictions, test_set.labels())
}

/// One family of runs on a 2-D task: fixed data, varying initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthRunConfig {
    pub net: String,
    pub dataset: SynthKind,
    pub samples: usize,
    pub data_seed: u64,
    pub split: SplitSpec,
    /// `seed` is replaced per run.
    pub training: SimpleConfig,
}

impl SynthRunConfig {
    pub fn new(net: SimpleNet, dataset: SynthKind) -> Self {
        SynthRunConfig {
            net: net.to_string(),
            dataset,
            samples: DEFAULT_SYNTH_SIZE,
            data_seed: 0,
            split: SplitSpec::default(),
            training: SimpleConfig::default(),
        }
    }

    pub fn data<T: Scalar>(&self) -> Result<(Dataset<T>, Dataset<T>)> {
        split_train_val(&synth_dataset(self.dataset, self.samples, self.data_seed)?, self.split)
    }

    /// Trains one run and returns its report; the final accuracy is the
    /// last record's validation accuracy.
    pub fn run<T: Scalar>(&self, seed: u64, data: &(Dataset<T>, Dataset<T>)) -> Result<TrainReport> {
        let net: SimpleNet = self.net.parse()?;
        let mut model = net.build::<T>()?;
        train_simple(&mut model, &data.0, &data.1, &SimpleConfig { seed, ..self.training.clone() })
    }
}

/// Final validation accuracies of runs seeded `base_seed..base_seed + n_runs`.
pub fn final_accuracies(config: &SynthRunConfig, n_runs: usize, base_seed: u64) -> Result<Vec<f64>> {
    let data = config.data::<f32>()?;
    (0..n_runs)
        .map(|i| Ok(config.run(base_seed.wrapping_add(i as u64), &data)?.final_record().val_acc))
        .collect()
}

/// Fraction of `n_runs` runs whose final accuracy is below `threshold`.
pub fn instability_rate(config: &SynthRunConfig, n_runs: usize, threshold: f64, base_seed: u64) -> Result<f64> {
    if n_runs < 10 {
        return Err(Error::invalid(format!("instability rate needs at least 10 runs, got {n_runs}")));
    }
    let accs = final_accuracies(config, n_runs, base_seed)?;
    Ok(accs.iter().filter(|&&a| a < threshold).count() as f64 / n_runs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vote_examples() {
        assert_eq!(majority_vote(&[vec![1], vec![1], vec![3]]).unwrap(), vec![1]);
        assert_eq!(majority_vote(&[vec![2], vec![7]]).unwrap(), vec![2]);
        assert_eq!(majority_vote(&[vec![7], vec![2]]).unwrap(), vec![2]);
        assert_eq!(majority_vote(&[vec![4, 0, 9]]).unwrap(), vec![4, 0, 9]);
        assert!(majority_vote(&[]).is_err());
        assert!(majority_vote(&[vec![1, 2], vec![1]]).is_err());
    }

    #[test]
    fn report_limits_and_single_member() {
        let m = |seed, acc| MemberResult {
            seed,
            test_accuracy: Some(acc),
            total_epochs: Some(1),
            best_expected: Some(acc),
            error: None,
        };
        let labels = vec![0, 1, 1, 0];
        let r = EnsembleReport::from_members("x", EstimatorKind::MinTwoHalves, vec![m(0, 0.75)], &[vec![0, 1, 1, 1]], &labels)
            .unwrap();
        assert_eq!(r.majority_vote_accuracy, Some(0.75));
        assert_eq!((r.accuracy_min, r.accuracy_max), (Some(0.75), Some(0.75)));
        let preds = [vec![0, 1, 1, 1], vec![0, 0, 1, 0], vec![1, 1, 1, 0]];
        let r = EnsembleReport::from_members(
            "x",
            EstimatorKind::Combined,
            vec![m(0, 0.75), m(1, 0.75), m(2, 0.75)],
            &preds,
            &labels,
        )
        .unwrap();
        assert_eq!(r.majority_vote_accuracy, Some(1.0));
        assert!(r.complete);
        assert_eq!(r.member_seeds, vec![0, 1, 2]);
    }

    #[test]
    fn failed_member_marks_report_incomplete() {
        let ok = MemberResult { seed: 0, test_accuracy: Some(0.5), total_epochs: Some(3), best_expected: Some(0.5), error: None };
        let bad = MemberResult { seed: 1, test_accuracy: None, total_epochs: None, best_expected: None, error: Some("boom".into()) };
        let r = EnsembleReport::from_members("x", EstimatorKind::MinTwoHalves, vec![ok, bad], &[vec![0, 0]], &[0, 1]).unwrap();
        assert!(!r.complete);
        assert_eq!(r.requested_members, 2);
        assert_eq!((r.accuracy_min, r.accuracy_max), (Some(0.5), Some(0.5)));
    }

    #[test]
    fn instability_bounds() {
        let mut cfg = SynthRunConfig::new("abs1x5".parse().unwrap(), SynthKind::Linear);
        cfg.samples = 100;
        cfg.training.epochs = 3;
        assert_eq!(instability_rate(&cfg, 10, 1.1, 0).unwrap(), 1.0);
        assert_eq!(instability_rate(&cfg, 10, 0.0, 0).unwrap(), 0.0);
        assert!(instability_rate(&cfg, 9, 0.8, 0).is_err());
    }

    #[test]
    fn small_campaign() {
        use crate::models::ArchSpec;
        let data = synth_dataset::<f32>(SynthKind::Linear, 200, 4).unwrap();
        let (tr, va) = split_train_val(&data, SplitSpec::default()).unwrap();
        let model = ModelSpec::new(ArchSpec::Mlp { input_dim: 2, hidden: vec![5], classes: 2 }, crate::nn::Activation::Abs);
        let cfg = EnsembleConfig {
            model: model.to_string(),
            members: 3,
            base_seed: 10,
            train: TrainConfig {
                stage_lrs: vec![1e-2, 1e-3],
                patience: 2,
                batch_size: 16,
                chance_level: Some(0.0),
                ..TrainConfig::default()
            },
        };
        let mut seen = Vec::new();
        let r = train_ensemble(&cfg, &tr, &va, &va, |i, _, _| {
            seen.push(i);
            Ok(())
        })
        .unwrap();
        assert!(r.complete, "{:?}", r.members);
        assert_eq!(seen, vec![0, 1, 2]);
        assert_eq!(r.member_seeds, vec![10, 11, 12]);
        let accs: Vec<f64> = r.members.iter().map(|m| m.test_accuracy.unwrap()).collect();
        assert!(accs.iter().all(|&a| r.accuracy_min.unwrap() <= a && a <= r.accuracy_max.unwrap()));
        let again = train_ensemble(&cfg, &tr, &va, &va, |_, _, _| Ok(())).unwrap();
        assert_eq!(r, again);
    }

    proptest! {
        #[test]
        fn vote_ignores_member_order(
            preds in prop::collection::vec(prop::collection::vec(0usize..4, 6), 1..6),
            rot in 0usize..6,
        ) {
            let mut rotated = preds.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            prop_assert_eq!(majority_vote(&preds).unwrap(), majority_vote(&rotated).unwrap());
            let same = vec![preds[0].clone(); 3];
            prop_assert_eq!(majority_vote(&same).unwrap(), preds[0].clone());
        }
    }
}
