use crate::error::{Error, Result};
use crate::nn::{Layer, LayerGradients, LayerKind, Tensor};
use crate::scalar::Scalar;

/// An ordered chain of layers producing class logits.
#[derive(Clone, Debug)]
pub struct Network<T> {
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
}

fn at_layer(index: usize, kind: LayerKind) -> impl FnOnce(Error) -> Error {
    move |e| Error::Layer { index, kind: kind.to_string(), source: Box::new(e) }
}

impl<T: Scalar> Network<T> {
    /// Assembles a network from descriptors, inferring every layer's input
    /// extent from the per-sample `input_shape`. Parameters start at zero.
    pub fn new(name: impl Into<String>, input_shape: &[usize], kinds: &[LayerKind]) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(kinds.len());
        for (i, &kind) in kinds.iter().enumerate() {
            layers.push(Layer::new(kind, &shape).map_err(at_layer(i, kind))?);
            shape = kind.output_shape(&shape).map_err(at_layer(i, kind))?;
        }
        Ok(Network { name: name.into(), input_shape: input_shape.to_vec(), layers })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(|l| l.kind()).collect()
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> Vec<usize> {
        let mut shape = self.input_shape.clone();
        for layer in &self.layers {
            shape = layer.kind().output_shape(&shape).expect("validated at construction");
        }
        shape
    }

    pub fn count_params(&self) -> usize {
        self.layers.iter().flat_map(|l| l.params()).map(|p| p.len()).sum()
    }

    /// `(name, tensor)` pairs in a fixed order: `"<layer>.weight"`, `"<layer>.bias"`.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (j, p) in layer.params().iter().enumerate() {
                out.push((param_name(i, j), p));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut().iter_mut()).collect()
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers.iter().flat_map(|l| l.params()).map(|p| p.shape().to_vec()).collect()
    }

    /// Copies parameters out, in `named_params` order.
    pub fn snapshot(&self) -> Vec<Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).cloned().collect()
    }

    /// Installs parameters previously taken with [`Network::snapshot`].
    pub fn restore(&mut self, params: &[Tensor<T>]) -> Result<()> {
        let shapes = self.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::shape(format!("{} tensors for {} parameters", params.len(), shapes.len())));
        }
        for (shape, p) in shapes.iter().zip(params) {
            p.expect_shape(shape)?;
        }
        for (dst, src) in self.params_mut().into_iter().zip(params) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.ndim() == 0 || x.shape()[1..] != self.input_shape[..] {
            return Err(Error::shape(format!(
                "network input must be [N, {:?}], got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Training forward pass: caches every layer's input for [`Network::backward`].
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let kind = layer.kind();
            h = layer.forward(&h, true).map_err(at_layer(i, kind))?;
        }
        Ok(h)
    }

    /// Inference forward pass; leaves caches untouched.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        self.infer_from(0, x, |_, _| {})
    }

    /// Runs layers `start..` on `x`, calling `visit(index, input)` before
    /// each activation layer.
    pub fn infer_from(
        &self,
        start: usize,
        x: &Tensor<T>,
        mut visit: impl FnMut(usize, &Tensor<T>),
    ) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate().skip(start) {
            if layer.activation().is_some() {
                visit(i, &h);
            }
            h = layer.infer(&h).map_err(at_layer(i, layer.kind()))?;
        }
        Ok(h)
    }

    /// Inputs to every layer (entry `i` feeds layer `i`; the last entry is the output).
    pub fn trace(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.check_input(x)?;
        let mut out = vec![x.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.infer(out.last().unwrap()).map_err(at_layer(i, layer.kind()))?;
            out.push(next);
        }
        Ok(out)
    }

    /// Reverse pass from `d loss / d logits`. Returns one entry per layer,
    /// in layer order.
    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Vec<LayerGradients<T>>> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = upstream.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let kind = layer.kind();
            let lg = layer.backward(&g).map_err(at_layer(i, kind))?;
            g = lg.input.clone();
            grads.push(lg);
        }
        grads.reverse();
        Ok(grads)
    }

    pub fn clear_cache(&mut self) {
        for layer in &mut self.layers {
            layer.clear_cache();
        }
    }

    /// Same architecture and parameters in another scalar type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let mut net = Network::<U>::new(self.name.clone(), &self.input_shape, &self.kinds())
            .expect("architecture already validated");
        let params: Vec<Tensor<U>> = self.snapshot().iter().map(|p| p.cast()).collect();
        net.restore(&params).expect("same shapes");
        net
    }
}

pub fn param_name(layer: usize, slot: usize) -> String {
    format!("{layer}.{}", if slot == 0 { "weight" } else { "bias" })
}

/// Parameter gradients flattened into `named_params` order.
pub fn flatten_param_grads<T>(grads: Vec<LayerGradients<T>>) -> Vec<Tensor<T>> {
    grads.into_iter().flat_map(|g| g.params).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{softmax_xent, Activation};

    #[test]
    fn activation_only_net_is_identity_with_no_params() {
        let net = Network::<f64>::new("acts", &[3], &[LayerKind::act(Activation::Relu)]).unwrap();
        assert_eq!(net.count_params(), 0);
        let x = Tensor::from_f64([1, 3], &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(net.infer(&x).unwrap(), x);
        let empty = Network::<f64>::new("empty", &[3], &[]).unwrap();
        assert_eq!(empty.infer(&x).unwrap(), x);
    }

    #[test]
    fn single_hidden_abs_net_matches_direct_evaluation() {
        // f_c(x) = sum_q W[c,q] |sum_p A[q,p] x_p + B_q| + b_c
        let kinds = [LayerKind::dense(5), LayerKind::act(Activation::Abs), LayerKind::dense(2)];
        let mut net = Network::<f64>::new("eq4", &[2], &kinds).unwrap();
        let a: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) * 0.3).collect();
        let b: Vec<f64> = (0..5).map(|i| i as f64 * 0.1 - 0.2).collect();
        let w: Vec<f64> = (0..10).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let c = [0.25, -0.5];
        net.restore(&[
            Tensor::from_f64([5, 2], &a).unwrap(),
            Tensor::from_f64([5], &b).unwrap(),
            Tensor::from_f64([2, 5], &w).unwrap(),
            Tensor::from_f64([2], &c).unwrap(),
        ])
        .unwrap();
        let x = [[0.3, -0.7], [1.2, 0.4]];
        let input = Tensor::from_f64([2, 2], &[x[0][0], x[0][1], x[1][0], x[1][1]]).unwrap();
        let out = net.infer(&input).unwrap();
        for (s, xs) in x.iter().enumerate() {
            for class in 0..2 {
                let mut want = c[class];
                for q in 0..5 {
                    let h = a[q * 2] * xs[0] + a[q * 2 + 1] * xs[1] + b[q];
                    want += w[class * 5 + q] * h.abs();
                }
                assert!((out.data()[s * 2 + class] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let mut net = Network::<f64>::new("d", &[2], &[LayerKind::dense(2)]).unwrap();
        let err = net.backward(&Tensor::zeros([1, 2])).unwrap_err();
        assert!(matches!(err.root(), Error::MissingForward));
    }

    #[test]
    fn shape_chain_break_names_the_layer() {
        let kinds = [LayerKind::Flatten, LayerKind::dense(4), LayerKind::AvgPool2x2];
        match Network::<f32>::new("bad", &[1, 4, 4], &kinds) {
            Err(Error::Layer { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn forward_backward_produce_per_layer_gradients() {
        let kinds = [LayerKind::dense(3), LayerKind::act(Activation::Tanh), LayerKind::dense(2)];
        let mut net = Network::<f64>::new("mlp", &[2], &kinds).unwrap();
        for p in net.params_mut() {
            for (i, v) in p.data_mut().iter_mut().enumerate() {
                *v = 0.1 * (i as f64 + 1.0);
            }
        }
        let x = Tensor::from_f64([2, 2], &[1., 2., -1., 0.5]).unwrap();
        let logits = net.forward(&x).unwrap();
        let (_, g) = softmax_xent(&logits, &[0, 1]).unwrap();
        let grads = net.backward(&g).unwrap();
        assert_eq!(grads.len(), 3);
        let flat = flatten_param_grads(grads);
        let shapes: Vec<_> = flat.iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, net.param_shapes());
    }

    #[test]
    fn cast_preserves_outputs() {
        let kinds = [LayerKind::dense(3), LayerKind::act(Activation::Selu), LayerKind::dense(2)];
        let mut net = Network::<f32>::new("mlp", &[2], &kinds).unwrap();
        for p in net.params_mut() {
            for (i, v) in p.data_mut().iter_mut().enumerate() {
                *v = 0.25 * i as f32 - 0.3;
            }
        }
        let wide: Network<f64> = net.cast();
        let x = Tensor::<f32>::from_f64([1, 2], &[0.5, -0.25]).unwrap();
        let a = net.infer(&x).unwrap();
        let b = wide.infer(&x.cast()).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((*u as f64 - v).abs() < 1e-6);
        }
    }
}
