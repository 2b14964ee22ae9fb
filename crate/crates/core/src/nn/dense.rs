use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::{gemm, MatRef, Scalar};

/// `y = x W^T + b` for `x: [N, in]`, `W: [out, in]`, `b: [out]`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (out_f, in_f) = (weight.dim(0), weight.dim(1));
    if x.ndim() != 2 || x.dim(1) != in_f {
        return Err(Error::shape(format!("dense expects [N, {in_f}], got {:?}", x.shape())));
    }
    bias.expect_shape(&[out_f])?;
    let n = x.dim(0);
    let mut y = Vec::with_capacity(n * out_f);
    for _ in 0..n {
        y.extend_from_slice(bias.data());
    }
    gemm(T::one(), MatRef::new(x.data(), n, in_f), MatRef::t(weight.data(), out_f, in_f), T::one(), &mut y, out_f);
    Tensor::new([n, out_f], y)
}

pub struct DenseGradients<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub input: Tensor<T>,
}

pub fn dense_backward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, upstream: &Tensor<T>) -> Result<DenseGradients<T>> {
    let (out_f, in_f) = (weight.dim(0), weight.dim(1));
    let n = x.dim(0);
    x.expect_shape(&[n, in_f])?;
    upstream.expect_shape(&[n, out_f])?;
    let dy = upstream.data();
    let mut dw = vec![T::zero(); out_f * in_f];
    gemm(T::one(), MatRef::t(dy, n, out_f), MatRef::new(x.data(), n, in_f), T::zero(), &mut dw, in_f);
    let mut db = vec![T::zero(); out_f];
    for row in dy.chunks_exact(out_f) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    let mut dx = vec![T::zero(); n * in_f];
    gemm(T::one(), MatRef::new(dy, n, out_f), MatRef::new(weight.data(), out_f, in_f), T::zero(), &mut dx, in_f);
    Ok(DenseGradients {
        weight: Tensor::new([out_f, in_f], dw)?,
        bias: Tensor::new([out_f], db)?,
        input: Tensor::new([n, in_f], dx)?,
    })
}
