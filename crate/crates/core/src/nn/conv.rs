//! 2-D convolution (cross-correlation) lowered to matrix products via im2col.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::{gemm, MatRef, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    /// Zero padding of `k / 2` on each side.
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_ch: usize,
    pub height: usize,
    pub width: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], weight: &[usize], padding: Padding) -> Result<Self> {
        if input.len() != 4 {
            return Err(Error::shape(format!("conv input must be [N,C,H,W], got {input:?}")));
        }
        let [batch, in_ch, height, width] = [input[0], input[1], input[2], input[3]];
        let [out_ch, w_in, kh, kw] = [weight[0], weight[1], weight[2], weight[3]];
        if w_in != in_ch {
            return Err(Error::shape(format!("conv expects {w_in} input channels, got {in_ch}")));
        }
        let (pad_h, pad_w) = match padding {
            Padding::Valid => (0, 0),
            Padding::Same => (kh / 2, kw / 2),
        };
        if height + 2 * pad_h < kh || width + 2 * pad_w < kw {
            return Err(Error::shape(format!("{kh}x{kw} kernel larger than {height}x{width} input")));
        }
        let out_h = height + 2 * pad_h - kh + 1;
        let out_w = width + 2 * pad_w - kw + 1;
        Ok(ConvGeometry { batch, in_ch, height, width, out_ch, kh, kw, pad_h, pad_w, out_h, out_w })
    }

    /// Rows of the im2col matrix.
    pub fn patch_len(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    /// Columns of the im2col matrix.
    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_ch, self.out_h, self.out_w]
    }

    /// Output columns `[lo, hi)` that read inside the input for kernel
    /// column `j`.
    fn valid_cols(&self, j: usize) -> (usize, usize) {
        let lo = self.pad_w.saturating_sub(j).min(self.out_w);
        let hi = (self.width + self.pad_w).saturating_sub(j).min(self.out_w).max(lo);
        (lo, hi)
    }

    /// Unfolds one sample into `cols`: patch row `r` of the sample lands at
    /// `cols[r * stride + offset..][..positions]`.
    fn im2col<T: Scalar>(&self, sample: &[T], cols: &mut [T], stride: usize, offset: usize) {
        let positions = self.positions();
        for c in 0..self.in_ch {
            let plane = &sample[c * self.height * self.width..(c + 1) * self.height * self.width];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (c * self.kh + i) * self.kw + j;
                    let dst = &mut cols[row * stride + offset..][..positions];
                    let (lo, hi) = self.valid_cols(j);
                    for oy in 0..self.out_h {
                        let y = (oy + i) as isize - self.pad_h as isize;
                        let out_row = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        if y < 0 || y >= self.height as isize {
                            out_row.fill(T::zero());
                            continue;
                        }
                        let src = &plane[y as usize * self.width..(y as usize + 1) * self.width];
                        out_row[..lo].fill(T::zero());
                        out_row[hi..].fill(T::zero());
                        let x0 = lo + j - self.pad_w;
                        out_row[lo..hi].copy_from_slice(&src[x0..x0 + hi - lo]);
                    }
                }
            }
        }
    }

    /// Folds columns laid out as in [`ConvGeometry::im2col`] back,
    /// accumulating into one sample's gradient.
    fn col2im<T: Scalar>(&self, cols: &[T], stride: usize, offset: usize, sample: &mut [T]) {
        let positions = self.positions();
        for c in 0..self.in_ch {
            let plane = &mut sample[c * self.height * self.width..(c + 1) * self.height * self.width];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (c * self.kh + i) * self.kw + j;
                    let src = &cols[row * stride + offset..][..positions];
                    let (lo, hi) = self.valid_cols(j);
                    for oy in 0..self.out_h {
                        let y = (oy + i) as isize - self.pad_h as isize;
                        if y < 0 || y >= self.height as isize {
                            continue;
                        }
                        let x0 = lo + j - self.pad_w;
                        let dst = &mut plane[y as usize * self.width + x0..][..hi - lo];
                        for (d, &v) in dst.iter_mut().zip(&src[oy * self.out_w + lo..oy * self.out_w + hi]) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

/// Samples unfolded together into one `patch_len x (m * positions)` matrix.
const CHUNK: usize = 8;

fn chunks(batch: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..batch).step_by(CHUNK).map(move |s| (s, CHUNK.min(batch - s)))
}

/// Unfolds samples `[s, s + m)` of `x` side by side into `cols`.
fn unfold_chunk<T: Scalar>(g: &ConvGeometry, x: &[T], s: usize, m: usize, cols: &mut [T]) {
    let in_len = g.in_ch * g.height * g.width;
    let p = g.positions();
    for i in 0..m {
        g.im2col(&x[(s + i) * in_len..(s + i + 1) * in_len], cols, m * p, i * p);
    }
}

/// Cross-correlation plus bias.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>, padding: Padding) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(x.shape(), weight.shape(), padding)?;
    bias.expect_shape(&[g.out_ch])?;
    let (k, p) = (g.patch_len(), g.positions());
    let out_len = g.out_ch * p;
    let mut out = vec![T::zero(); g.batch * out_len];
    let mut cols = vec![T::zero(); CHUNK.min(g.batch) * k * p];
    let mut prod = vec![T::zero(); g.out_ch * CHUNK.min(g.batch) * p];
    for (s, m) in chunks(g.batch) {
        let col = &mut cols[..m * k * p];
        unfold_chunk(&g, x.data(), s, m, col);
        let prod = &mut prod[..g.out_ch * m * p];
        gemm(T::one(), MatRef::new(weight.data(), g.out_ch, k), MatRef::new(col, k, m * p), T::zero(), prod, m * p);
        for i in 0..m {
            let dst = &mut out[(s + i) * out_len..(s + i + 1) * out_len];
            for (o, &b) in bias.data().iter().enumerate() {
                let src = &prod[o * m * p + i * p..][..p];
                for (d, &v) in dst[o * p..(o + 1) * p].iter_mut().zip(src) {
                    *d = v + b;
                }
            }
        }
    }
    Tensor::new(g.output_shape(), out)
}

pub struct ConvGradients<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub input: Tensor<T>,
}

/// Gradients of a convolution at input `x`.
pub fn conv2d_backward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, padding: Padding, upstream: &Tensor<T>) -> Result<ConvGradients<T>> {
    let g = ConvGeometry::new(x.shape(), weight.shape(), padding)?;
    upstream.expect_shape(&g.output_shape())?;
    let (k, p) = (g.patch_len(), g.positions());
    let in_len = g.in_ch * g.height * g.width;
    let out_len = g.out_ch * p;
    let mut dw = vec![T::zero(); g.out_ch * k];
    let mut db = vec![T::zero(); g.out_ch];
    let mut dx = vec![T::zero(); g.batch * in_len];
    let mut cols = vec![T::zero(); CHUNK.min(g.batch) * k * p];
    let mut dcols = vec![T::zero(); CHUNK.min(g.batch) * k * p];
    let mut dy = vec![T::zero(); g.out_ch * CHUNK.min(g.batch) * p];
    for (s, m) in chunks(g.batch) {
        let col = &mut cols[..m * k * p];
        unfold_chunk(&g, x.data(), s, m, col);
        // regroup the chunk's upstream as out_ch x (m * positions)
        let dy = &mut dy[..g.out_ch * m * p];
        for i in 0..m {
            let src = &upstream.data()[(s + i) * out_len..(s + i + 1) * out_len];
            for o in 0..g.out_ch {
                dy[o * m * p + i * p..][..p].copy_from_slice(&src[o * p..(o + 1) * p]);
            }
        }
        for (o, acc) in db.iter_mut().enumerate() {
            *acc += dy[o * m * p..(o + 1) * m * p].iter().copied().sum::<T>();
        }
        gemm(T::one(), MatRef::new(dy, g.out_ch, m * p), MatRef::t(col, k, m * p), T::one(), &mut dw, k);
        let dcols = &mut dcols[..m * k * p];
        gemm(T::one(), MatRef::t(weight.data(), g.out_ch, k), MatRef::new(dy, g.out_ch, m * p), T::zero(), dcols, m * p);
        for i in 0..m {
            g.col2im(dcols, m * p, i * p, &mut dx[(s + i) * in_len..(s + i + 1) * in_len]);
        }
    }
    Ok(ConvGradients {
        weight: Tensor::new(weight.shape(), dw)?,
        bias: Tensor::new([g.out_ch], db)?,
        input: Tensor::new(x.shape(), dx)?,
    })
}
