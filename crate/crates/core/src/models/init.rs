use rand::distributions::{Distribution, Uniform};

use crate::nn::{LayerKind, Network};
use crate::rng::{rng_for, stream};
use crate::scalar::Scalar;

/// Glorot-uniform weights (`limit = sqrt(6 / (fan_in + fan_out))`) and zero
/// biases. Tensors are filled in `named_params` order from a single ChaCha8
/// stream keyed by `seed`, so the result is a pure function of the
/// architecture and the seed.
pub fn init_params<T: Scalar>(net: &mut Network<T>, seed: u64) {
    let mut rng = rng_for(seed, stream::INIT, 0);
    let fans: Vec<(usize, usize)> = net
        .layers()
        .iter()
        .filter(|l| !l.params().is_empty())
        .map(|l| {
            let w = l.params()[0].shape();
            match l.kind() {
                LayerKind::Conv2d { kernel_h, kernel_w, .. } => {
                    let field = kernel_h * kernel_w;
                    (w[1] * field, w[0] * field)
                }
                _ => (w[1], w[0]),
            }
        })
        .collect();
    let mut fans = fans.into_iter();
    let mut params = net.params_mut().into_iter();
    while let (Some(weight), Some(bias)) = (params.next(), params.next()) {
        let (fan_in, fan_out) = fans.next().expect("one fan pair per parameterized layer");
        let limit = T::from_f64_lossy((6.0 / (fan_in + fan_out) as f64).sqrt());
        let dist = Uniform::new_inclusive(-limit, limit);
        for w in weight.data_mut() {
            *w = dist.sample(&mut rng);
        }
        bias.data_mut().fill(T::zero());
    }
}
