use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub const SELU_ALPHA: f64 = 1.673_263_24;
pub const SELU_LAMBDA: f64 = 1.050_700_98;

/// Elementwise activation kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Abs,
    Tanh,
    Relu,
    Selu,
}

impl Activation {
    pub const ALL: [Activation; 4] = [Activation::Tanh, Activation::Relu, Activation::Selu, Activation::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Abs => "abs",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Selu => "selu",
        }
    }

    /// True when the derivative jumps at zero.
    pub fn has_kink(self) -> bool {
        !matches!(self, Activation::Tanh)
    }

    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Abs => x.abs(),
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Selu => {
                let lambda = T::from_f64_lossy(SELU_LAMBDA);
                if x > T::zero() {
                    lambda * x
                } else {
                    lambda * T::from_f64_lossy(SELU_ALPHA) * x.exp_m1()
                }
            }
        }
    }

    /// Derivative at `x`. Abs and ReLU use 0 at the origin.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Abs => {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            Activation::Selu => {
                let lambda = T::from_f64_lossy(SELU_LAMBDA);
                if x > T::zero() {
                    lambda
                } else {
                    lambda * T::from_f64_lossy(SELU_ALPHA) * x.exp()
                }
            }
        }
    }

    pub fn forward<T: Scalar>(self, x: &Tensor<T>) -> Tensor<T> {
        match self {
            Activation::Abs => x.map(|v| v.abs()),
            Activation::Relu => x.map(|v| Activation::Relu.apply(v)),
            Activation::Tanh => x.map(|v| v.tanh()),
            Activation::Selu => x.map(|v| Activation::Selu.apply(v)),
        }
    }

    /// `upstream * f'(x)` elementwise.
    pub fn backward<T: Scalar>(self, x: &Tensor<T>, upstream: &Tensor<T>) -> crate::Result<Tensor<T>> {
        x.zip_map(upstream, |xi, gi| gi * self.derivative(xi))
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "abs" => Ok(Activation::Abs),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "selu" => Ok(Activation::Selu),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(values: &[f64]) -> Tensor<f64> {
        Tensor::from_f64([values.len()], values).unwrap()
    }

    #[test]
    fn forward_examples() {
        assert_eq!(Activation::Abs.forward(&t(&[-2., 0., 3.])).data(), &[2., 0., 3.]);
        assert_eq!(Activation::Selu.forward(&t(&[0.])).data(), &[0.]);
        assert_eq!(Activation::Selu.forward(&t(&[1.])).data(), &[1.050_700_98]);
        assert_eq!(Activation::Relu.forward(&t(&[-1., 2.])).data(), &[0., 2.]);
    }

    #[test]
    fn backward_examples() {
        let ones = t(&[1., 1., 1.]);
        let g = Activation::Abs.backward(&t(&[-2., 0., 3.]), &ones).unwrap();
        assert_eq!(g.data(), &[-1., 0., 1.]);
        let g = Activation::Relu.backward(&t(&[-1., 2.]), &t(&[5., 5.])).unwrap();
        assert_eq!(g.data(), &[0., 5.]);
        let g = Activation::Tanh.backward(&t(&[0.]), &t(&[3.])).unwrap();
        assert_eq!(g.data(), &[3.]);
    }

    #[test]
    fn backward_requires_matching_shapes() {
        assert!(Activation::Abs.backward(&t(&[1., 2.]), &t(&[1.])).is_err());
    }

    #[test]
    fn derivatives_match_central_differences_away_from_zero() {
        let h = 1e-6;
        for act in Activation::ALL {
            for &x in &[-2.0, -0.3, 0.05, 0.7, 1.9] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                let an: f64 = act.derivative(x);
                assert!((fd - an).abs() < 1e-8, "{act} at {x}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn parse_round_trips() {
        for act in Activation::ALL {
            assert_eq!(act.name().parse::<Activation>().unwrap(), act);
        }
        assert!("sigmoid".parse::<Activation>().is_err());
    }

    proptest! {
        #[test]
        fn abs_backward_preserves_magnitude(x in -1e3f64..1e3, g in -1e3f64..1e3) {
            let d = Activation::Abs.backward(&t(&[x]), &t(&[g])).unwrap().data()[0];
            if x != 0.0 {
                prop_assert_eq!(d.abs(), g.abs());
            } else {
                prop_assert_eq!(d, 0.0);
            }
        }

        #[test]
        fn abs_derivative_is_zero_only_at_origin(x in prop::num::f32::NORMAL | prop::num::f32::ZERO) {
            let d = Activation::Abs.derivative(x).abs();
            prop_assert!(d == 0.0 || d == 1.0);
            prop_assert_eq!(d == 0.0, x == 0.0);
        }
    }
}
