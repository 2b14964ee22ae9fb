use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::{rng_for, stream};
use crate::scalar::Scalar;

/// Labeled samples; the leading axis of `inputs` indexes samples.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    inputs: Tensor<T>,
    labels: Vec<usize>,
    num_classes: usize,
    provenance: String,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Tensor<T>, labels: Vec<usize>, num_classes: usize, provenance: impl Into<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset must not be empty"));
        }
        if inputs.dim(0) != labels.len() {
            return Err(Error::shape(format!("{} inputs but {} labels", inputs.dim(0), labels.len())));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, classes: num_classes });
        }
        Ok(Dataset { inputs, labels, num_classes, provenance: provenance.into() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &Tensor<T> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Per-sample input shape.
    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    /// Samples `[start, end)` in order.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        Ok(Dataset {
            inputs: self.inputs.slice_rows(start, end)?,
            labels: self.labels[start..end].to_vec(),
            num_classes: self.num_classes,
            provenance: format!("{}[{start}..{end}]", self.provenance),
        })
    }

    /// First `n` samples (or all of them when `n >= len`).
    pub fn take(&self, n: usize) -> Result<Self> {
        if n >= self.len() {
            return Ok(self.clone());
        }
        self.slice(0, n)
    }

    /// Inputs and labels of the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let x = self.inputs.gather_rows(indices)?;
        Ok((x, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}

/// Sequential train/validation split: the first `ceil(fraction * N)`
/// samples train, the rest validate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.8 }
    }
}

impl SplitSpec {
    pub fn train_len(&self, n: usize) -> Result<usize> {
        let f = self.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::invalid(format!(
                "train fraction must lie strictly between 0 and 1 (a validation part is required), got {f}"
            )));
        }
        // 0.8 * 60000 is 48000.000000000004 in binary floating point
        let k = (f * n as f64 - 1e-9).ceil() as usize;
        if k == 0 || k >= n {
            return Err(Error::invalid(format!("split of {n} samples at {f} leaves an empty part")));
        }
        Ok(k)
    }
}

pub fn split_train_val<T: Scalar>(data: &Dataset<T>, spec: SplitSpec) -> Result<(Dataset<T>, Dataset<T>)> {
    if data.len() < 2 {
        return Err(Error::invalid("need at least 2 samples to split"));
    }
    let k = spec.train_len(data.len())?;
    Ok((data.slice(0, k)?, data.slice(k, data.len())?))
}

/// Mini-batch index lists for one epoch: a Fisher-Yates shuffle from the
/// `(run_seed, epoch)` stream, cut into `batch_size` chunks with the final
/// partial batch kept.
pub fn batches(n: usize, batch_size: usize, run_seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(run_seed, stream::SHUFFLE, epoch));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(n: usize) -> Dataset<f32> {
        let x = Tensor::new([n, 1], (0..n).map(|i| i as f32).collect()).unwrap();
        Dataset::new(x, (0..n).map(|i| i % 2).collect(), 2, "toy").unwrap()
    }

    #[test]
    fn rejects_bad_labels_and_sizes() {
        let x = Tensor::<f32>::zeros([2, 1]);
        assert!(Dataset::new(x.clone(), vec![0, 2], 2, "t").is_err());
        assert!(Dataset::new(x, vec![0], 2, "t").is_err());
    }

    #[test]
    fn split_sizes() {
        let (tr, va) = split_train_val(&toy(10), SplitSpec::default()).unwrap();
        assert_eq!((tr.len(), va.len()), (8, 2));
        assert_eq!(va.inputs().data(), &[8.0, 9.0]);
        assert_eq!(SplitSpec::default().train_len(60_000).unwrap(), 48_000);
        assert_eq!(SplitSpec::default().train_len(7).unwrap(), 6);
    }

    #[test]
    fn split_requires_validation_part() {
        assert!(split_train_val(&toy(10), SplitSpec { train_fraction: 1.0 }).is_err());
        assert!(split_train_val(&toy(1), SplitSpec::default()).is_err());
    }

    #[test]
    fn batch_sizes_keep_the_tail() {
        let b = batches(5, 2, 1, 0).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 1]);
        assert!(batches(5, 0, 1, 0).is_err());
    }

    #[test]
    fn batches_are_seeded() {
        assert_eq!(batches(100, 7, 3, 2).unwrap(), batches(100, 7, 3, 2).unwrap());
        assert_ne!(batches(100, 7, 3, 2).unwrap(), batches(100, 7, 3, 3).unwrap());
    }

    proptest! {
        #[test]
        fn batches_partition_indices(n in 1usize..300, bs in 1usize..64, seed: u64, epoch in 0u64..100) {
            let mut all: Vec<usize> = batches(n, bs, seed, epoch).unwrap().concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn split_is_disjoint_and_exhaustive(n in 2usize..5000, f in 0.05f64..0.95) {
            let spec = SplitSpec { train_fraction: f };
            if let Ok(k) = spec.train_len(n) {
                prop_assert!(k >= 1 && k < n);
                prop_assert!(k as f64 >= f * n as f64 - 1e-6);
                prop_assert!((k as f64) < f * n as f64 + 1.0);
            }
        }
    }
}
