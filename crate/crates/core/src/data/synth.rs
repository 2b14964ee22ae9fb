//! Two-class problems on the square `[-1, 1]^2`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::{rng_for, stream};
use crate::scalar::Scalar;

pub const DEFAULT_SYNTH_SIZE: usize = 1000;
/// Squared radius of the disc in the circle task.
pub const CIRCLE_RADIUS_SQ: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Class 1 iff `x1 + x2 > 0`.
    Linear,
    /// Class 1 iff `x1 * x2 > 0`.
    Cross,
    /// Class 1 iff `x1^2 + x2^2 < 0.5`.
    Circle,
}

impl SynthKind {
    pub const ALL: [SynthKind; 3] = [SynthKind::Linear, SynthKind::Cross, SynthKind::Circle];

    pub fn label(self, x1: f64, x2: f64) -> usize {
        let inside = match self {
            SynthKind::Linear => x1 + x2 > 0.0,
            SynthKind::Cross => x1 * x2 > 0.0,
            SynthKind::Circle => x1 * x1 + x2 * x2 < CIRCLE_RADIUS_SQ,
        };
        inside as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Linear => "linear",
            SynthKind::Cross => "cross",
            SynthKind::Circle => "circle",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown synthetic dataset `{s}`")))
    }
}

/// `n` points drawn uniformly on the square and labeled noise-free.
pub fn synth_dataset<T: Scalar>(kind: SynthKind, n: usize, seed: u64) -> Result<Dataset<T>> {
    if n < 10 {
        return Err(Error::invalid(format!("synthetic datasets need n >= 10, got {n}")));
    }
    let mut rng = rng_for(seed, stream::SYNTH, 0);
    let mut xs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.gen_range(-1.0..=1.0);
        let x2: f64 = rng.gen_range(-1.0..=1.0);
        xs.push(T::from_f64_lossy(x1));
        xs.push(T::from_f64_lossy(x2));
        labels.push(kind.label(x1, x2));
    }
    Dataset::new(Tensor::new([n, 2], xs)?, labels, 2, format!("synth-{kind}-{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_examples() {
        assert_eq!(SynthKind::Circle.label(0.0, 0.0), 1);
        assert_eq!(SynthKind::Cross.label(0.5, -0.5), 0);
        assert_eq!(SynthKind::Cross.label(0.5, 0.5), 1);
        assert_eq!(SynthKind::Linear.label(0.3, -0.1), 1);
        assert_eq!(SynthKind::Linear.label(-0.3, 0.1), 0);
    }

    #[test]
    fn reproducible_per_seed() {
        let a = synth_dataset::<f32>(SynthKind::Cross, 100, 5).unwrap();
        let b = synth_dataset::<f32>(SynthKind::Cross, 100, 5).unwrap();
        assert_eq!(a.inputs(), b.inputs());
        assert_eq!(a.labels(), b.labels());
        let c = synth_dataset::<f32>(SynthKind::Cross, 100, 6).unwrap();
        assert_ne!(a.inputs(), c.inputs());
    }

    #[test]
    fn labels_follow_the_rule() {
        for kind in SynthKind::ALL {
            let d = synth_dataset::<f64>(kind, 500, 1).unwrap();
            for (p, &y) in d.inputs().data().chunks(2).zip(d.labels()) {
                assert_eq!(kind.label(p[0], p[1]), y);
                assert!(p.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn class_balance() {
        // Positive-class measure: 1/2 for linear and cross, pi * 0.5 / 4 for circle.
        let expected = [0.5, 0.5, std::f64::consts::PI * CIRCLE_RADIUS_SQ / 4.0];
        for (kind, p) in SynthKind::ALL.into_iter().zip(expected) {
            for seed in 0..10 {
                let d = synth_dataset::<f32>(kind, 1000, seed).unwrap();
                let share = d.labels().iter().sum::<usize>() as f64 / 1000.0;
                // 4 standard deviations of a binomial share at n = 1000
                let tol = 4.0 * (p * (1.0 - p) / 1000.0).sqrt();
                assert!((share - p).abs() < tol, "{kind} seed {seed}: {share}");
                if kind != SynthKind::Circle {
                    assert!((0.4..=0.6).contains(&share));
                }
            }
        }
    }

    #[test]
    fn too_small() {
        assert!(synth_dataset::<f32>(SynthKind::Linear, 9, 0).is_err());
        assert!("spiral".parse::<SynthKind>().is_err());
    }
}
