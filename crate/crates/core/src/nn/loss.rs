use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.ndim() != 2 {
        return Err(Error::shape(format!("softmax expects [N, K], got {:?}", logits.shape())));
    }
    let k = logits.dim(1);
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::new(logits.shape(), out)
}

/// Mean cross-entropy of softmax(logits) against integer labels, and its
/// gradient `(softmax - onehot) / N` with respect to the logits.
pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    if logits.ndim() != 2 || logits.dim(0) != labels.len() {
        return Err(Error::shape(format!(
            "logits {:?} do not match {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let k = logits.dim(1);
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    let n = T::from_usize(labels.len()).unwrap();
    let mut grad = logits.data().to_vec();
    let mut total = T::zero();
    for (row, &label) in grad.chunks_exact_mut(k).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let shifted = row[label] - max;
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        total += sum.ln() - shifted;
        for v in row.iter_mut() {
            *v = *v / sum / n;
        }
        row[label] -= T::one() / n;
    }
    Ok((total / n, Tensor::new(logits.shape(), grad)?))
}
