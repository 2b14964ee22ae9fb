use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::conv::{conv2d_backward, conv2d_forward, ConvGeometry, Padding};
use crate::nn::dense::{dense_backward, dense_forward};
use crate::nn::pool::{avgpool2x2_backward, avgpool2x2_forward};
use crate::nn::{Activation, Tensor};
use crate::scalar::Scalar;

/// Layer descriptor. Input extents are inferred when a network is assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d { out_channels: usize, kernel_h: usize, kernel_w: usize, padding: Padding },
    AvgPool2x2,
    Flatten,
    Dense { out_features: usize },
    Activation { activation: Activation },
}

impl LayerKind {
    pub fn conv(out_channels: usize, kernel: usize, padding: Padding) -> Self {
        LayerKind::Conv2d { out_channels, kernel_h: kernel, kernel_w: kernel, padding }
    }

    pub fn dense(out_features: usize) -> Self {
        LayerKind::Dense { out_features }
    }

    pub fn act(activation: Activation) -> Self {
        LayerKind::Activation { activation }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerKind::Conv2d { out_channels, kernel_h, kernel_w, padding } => {
                if input.len() != 3 {
                    return Err(Error::shape(format!("conv needs [C,H,W] input, got {input:?}")));
                }
                let g = ConvGeometry::new(
                    &[1, input[0], input[1], input[2]],
                    &[out_channels, input[0], kernel_h, kernel_w],
                    padding,
                )?;
                Ok(vec![out_channels, g.out_h, g.out_w])
            }
            LayerKind::AvgPool2x2 => {
                if input.len() != 3 || input[1] % 2 != 0 || input[2] % 2 != 0 {
                    return Err(Error::shape(format!("2x2 pooling needs even [C,H,W], got {input:?}")));
                }
                Ok(vec![input[0], input[1] / 2, input[2] / 2])
            }
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::Dense { out_features } => {
                if input.len() != 1 {
                    return Err(Error::shape(format!("dense needs flat input, got {input:?}")));
                }
                Ok(vec![out_features])
            }
            LayerKind::Activation { .. } => Ok(input.to_vec()),
        }
    }

    /// Parameter shapes for a given per-sample input shape: `[weight, bias]`
    /// for conv and dense, nothing otherwise.
    pub fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        match *self {
            LayerKind::Conv2d { out_channels, kernel_h, kernel_w, .. } => {
                vec![vec![out_channels, input[0], kernel_h, kernel_w], vec![out_channels]]
            }
            LayerKind::Dense { out_features } => vec![vec![out_features, input[0]], vec![out_features]],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerKind::Conv2d { out_channels, kernel_h, kernel_w, padding } => {
                write!(f, "conv{out_channels}@{kernel_h}x{kernel_w}/{padding:?}")
            }
            LayerKind::AvgPool2x2 => f.write_str("avgpool2x2"),
            LayerKind::Flatten => f.write_str("flatten"),
            LayerKind::Dense { out_features } => write!(f, "dense{out_features}"),
            LayerKind::Activation { activation } => write!(f, "{activation}"),
        }
    }
}

#[derive(Clone, Debug)]
enum Cache<T> {
    Input(Tensor<T>),
    Shape(Vec<usize>),
}

/// Gradients produced by one layer's backward pass; `params` mirrors the
/// layer's parameter order.
#[derive(Clone, Debug)]
pub struct LayerGradients<T> {
    pub params: Vec<Tensor<T>>,
    pub input: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct Layer<T> {
    kind: LayerKind,
    params: Vec<Tensor<T>>,
    cache: Option<Cache<T>>,
}

impl<T: Scalar> Layer<T> {
    /// A layer with zero-filled parameters for the given per-sample input.
    pub fn new(kind: LayerKind, input: &[usize]) -> Result<Self> {
        kind.output_shape(input)?;
        let params = kind.param_shapes(input).into_iter().map(Tensor::zeros).collect();
        Ok(Layer { kind, params, cache: None })
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn activation(&self) -> Option<Activation> {
        match self.kind {
            LayerKind::Activation { activation } => Some(activation),
            _ => None,
        }
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Forward pass. With `train` set, the inputs needed by
    /// [`Layer::backward`] are retained.
    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        self.cache = None;
        let (out, cache) = self.compute(x, train)?;
        self.cache = cache;
        Ok(out)
    }

    /// Forward pass without touching the cache.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.compute(x, false)?.0)
    }

    fn compute(&self, x: &Tensor<T>, keep: bool) -> Result<(Tensor<T>, Option<Cache<T>>)> {
        match self.kind {
            LayerKind::Conv2d { padding, .. } => {
                let out = conv2d_forward(x, &self.params[0], &self.params[1], padding)?;
                Ok((out, keep.then(|| Cache::Input(x.clone()))))
            }
            LayerKind::AvgPool2x2 => {
                Ok((avgpool2x2_forward(x)?, keep.then(|| Cache::Shape(x.shape().to_vec()))))
            }
            LayerKind::Flatten => {
                let n = x.dim(0);
                let out = x.clone().reshape([n, x.len() / n])?;
                Ok((out, keep.then(|| Cache::Shape(x.shape().to_vec()))))
            }
            LayerKind::Dense { .. } => {
                let out = dense_forward(x, &self.params[0], &self.params[1])?;
                Ok((out, keep.then(|| Cache::Input(x.clone()))))
            }
            LayerKind::Activation { activation } => {
                Ok((activation.forward(x), keep.then(|| Cache::Input(x.clone()))))
            }
        }
    }

    /// Backward pass; consumes the cache left by the matching forward.
    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<LayerGradients<T>> {
        let cache = self.cache.take().ok_or(Error::MissingForward)?;
        match (self.kind, cache) {
            (LayerKind::Conv2d { padding, .. }, Cache::Input(x)) => {
                let g = conv2d_backward(&x, &self.params[0], padding, upstream)?;
                Ok(LayerGradients { params: vec![g.weight, g.bias], input: g.input })
            }
            (LayerKind::AvgPool2x2, Cache::Shape(shape)) => {
                Ok(LayerGradients { params: Vec::new(), input: avgpool2x2_backward(&shape, upstream)? })
            }
            (LayerKind::Flatten, Cache::Shape(shape)) => {
                if upstream.len() != shape.iter().product::<usize>() {
                    return Err(Error::shape(format!("flatten upstream {:?} vs input {shape:?}", upstream.shape())));
                }
                Ok(LayerGradients { params: Vec::new(), input: upstream.clone().reshape(shape)? })
            }
            (LayerKind::Dense { .. }, Cache::Input(x)) => {
                let g = dense_backward(&x, &self.params[0], upstream)?;
                Ok(LayerGradients { params: vec![g.weight, g.bias], input: g.input })
            }
            (LayerKind::Activation { activation }, Cache::Input(x)) => {
                Ok(LayerGradients { params: Vec::new(), input: activation.backward(&x, upstream)? })
            }
            _ => Err(Error::MissingForward),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_free_kinds_own_nothing() {
        for kind in [LayerKind::AvgPool2x2, LayerKind::Flatten, LayerKind::act(Activation::Abs)] {
            let layer = Layer::<f32>::new(kind, &[2, 4, 4]).unwrap();
            assert!(layer.params().is_empty(), "{kind}");
        }
    }

    #[test]
    fn output_shapes() {
        assert_eq!(LayerKind::conv(6, 5, Padding::Valid).output_shape(&[1, 28, 28]).unwrap(), vec![6, 24, 24]);
        assert_eq!(LayerKind::conv(16, 5, Padding::Same).output_shape(&[6, 12, 12]).unwrap(), vec![16, 12, 12]);
        assert_eq!(LayerKind::AvgPool2x2.output_shape(&[16, 12, 12]).unwrap(), vec![16, 6, 6]);
        assert_eq!(LayerKind::Flatten.output_shape(&[120, 6, 6]).unwrap(), vec![4320]);
        assert!(LayerKind::dense(4).output_shape(&[2, 2]).is_err());
        assert!(LayerKind::AvgPool2x2.output_shape(&[1, 5, 4]).is_err());
    }

    #[test]
    fn backward_before_forward_fails() {
        let mut layer = Layer::<f64>::new(LayerKind::dense(3), &[2]).unwrap();
        let up = Tensor::zeros([1, 3]);
        assert!(matches!(layer.backward(&up), Err(Error::MissingForward)));
        let x = Tensor::zeros([1, 2]);
        layer.forward(&x, true).unwrap();
        assert!(layer.backward(&up).is_ok());
        // cache is consumed
        assert!(matches!(layer.backward(&up), Err(Error::MissingForward)));
    }

    #[test]
    fn inference_leaves_no_cache() {
        let mut layer = Layer::<f64>::new(LayerKind::act(Activation::Tanh), &[3]).unwrap();
        let x = Tensor::zeros([1, 3]);
        layer.forward(&x, false).unwrap();
        assert!(layer.backward(&x).is_err());
    }
}
