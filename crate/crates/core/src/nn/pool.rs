use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

fn check_even(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() != 4 {
        return Err(Error::shape(format!("pooling expects [N,C,H,W], got {shape:?}")));
    }
    let (h, w) = (shape[2], shape[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("2x2 pooling needs even extents, got {h}x{w}")));
    }
    Ok((shape[0] * shape[1], h, w))
}

/// Mean over disjoint 2x2 blocks, stride 2.
pub fn avgpool2x2_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (planes, h, w) = check_even(x.shape())?;
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64_lossy(0.25);
    let mut out = Vec::with_capacity(planes * oh * ow);
    for plane in x.data().chunks_exact(h * w) {
        for y in 0..oh {
            let r0 = &plane[2 * y * w..(2 * y + 1) * w];
            let r1 = &plane[(2 * y + 1) * w..(2 * y + 2) * w];
            for xx in 0..ow {
                out.push((r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]) * quarter);
            }
        }
    }
    let s = x.shape();
    Tensor::new([s[0], s[1], oh, ow], out)
}

/// Spreads `upstream / 4` over each source block.
pub fn avgpool2x2_backward<T: Scalar>(input_shape: &[usize], upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let (planes, h, w) = check_even(input_shape)?;
    let (oh, ow) = (h / 2, w / 2);
    upstream.expect_shape(&[input_shape[0], input_shape[1], oh, ow])?;
    let quarter = T::from_f64_lossy(0.25);
    let mut dx = vec![T::zero(); planes * h * w];
    for (plane, dy) in dx.chunks_exact_mut(h * w).zip(upstream.data().chunks_exact(oh * ow)) {
        for y in 0..oh {
            for xx in 0..ow {
                let g = dy[y * ow + xx] * quarter;
                plane[2 * y * w + 2 * xx] = g;
                plane[2 * y * w + 2 * xx + 1] = g;
                plane[(2 * y + 1) * w + 2 * xx] = g;
                plane[(2 * y + 1) * w + 2 * xx + 1] = g;
            }
        }
    }
    Tensor::new(input_shape, dx)
}
