use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, LayerKind, Network, Padding};
use crate::scalar::Scalar;

pub const MNIST_INPUT: [usize; 3] = [1, 28, 28];
pub const MNIST_CLASSES: usize = 10;
/// Width of the hidden dense layer that disturbing blocks repeat.
pub const DISTURBING_WIDTH: usize = 84;
pub const DEFAULT_DISTURBING_DEPTH: usize = 20;

/// The LeNet-family base architectures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseArch {
    /// conv6@5 -> pool -> conv16@5(same) -> pool -> conv120@1 -> dense84 -> dense10
    Lenet,
    /// `Lenet` without the conv120 layer.
    Small,
    /// `Small` with 3 channels in the second convolution.
    Tiny,
    /// conv6@5 -> pool -> conv16@5(same) -> pool -> conv120@5 -> pool -> dense120 -> dense84 -> dense10
    Conv120,
    /// `Conv120` with 64 channels in the second convolution.
    Conv64Conv120,
}

impl BaseArch {
    pub const ALL: [BaseArch; 5] =
        [BaseArch::Lenet, BaseArch::Small, BaseArch::Tiny, BaseArch::Conv120, BaseArch::Conv64Conv120];

    pub fn name(self) -> &'static str {
        match self {
            BaseArch::Lenet => "lenet",
            BaseArch::Small => "small",
            BaseArch::Tiny => "tiny",
            BaseArch::Conv120 => "conv120",
            BaseArch::Conv64Conv120 => "conv64conv120",
        }
    }

    /// Hidden layers up to and including the last hidden activation, and
    /// the output layer, kept separate so disturbing blocks can be spliced
    /// in between.
    pub fn layers(self, act: Activation) -> Vec<LayerKind> {
        let a = LayerKind::act(act);
        let second = match self {
            BaseArch::Tiny => 3,
            BaseArch::Conv64Conv120 => 64,
            _ => 16,
        };
        let mut v = vec![
            LayerKind::conv(6, 5, Padding::Valid),
            a,
            LayerKind::AvgPool2x2,
            LayerKind::conv(second, 5, Padding::Same),
            a,
            LayerKind::AvgPool2x2,
        ];
        match self {
            BaseArch::Lenet => v.extend([LayerKind::conv(120, 1, Padding::Valid), a, LayerKind::Flatten]),
            BaseArch::Small | BaseArch::Tiny => v.push(LayerKind::Flatten),
            BaseArch::Conv120 | BaseArch::Conv64Conv120 => v.extend([
                LayerKind::conv(120, 5, Padding::Valid),
                a,
                LayerKind::AvgPool2x2,
                LayerKind::Flatten,
                LayerKind::dense(120),
                a,
            ]),
        }
        v.extend([LayerKind::dense(DISTURBING_WIDTH), a]);
        v
    }
}

impl FromStr for BaseArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaseArch::ALL
            .into_iter()
            .find(|b| b.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownArch(s.to_string()))
    }
}

/// A buildable architecture: a catalog entry, optionally degraded by a stack
/// of dense blocks, or a small MLP for the 2-D tasks.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ArchSpec {
    Catalog { base: BaseArch, disturbing: Option<(usize, Activation)> },
    Mlp { input_dim: usize, hidden: Vec<usize>, classes: usize },
}

impl ArchSpec {
    pub fn catalog(base: BaseArch) -> Self {
        ArchSpec::Catalog { base, disturbing: None }
    }

    pub fn degraded(base: BaseArch, depth: usize, activation: Activation) -> Self {
        ArchSpec::Catalog { base, disturbing: Some((depth, activation)) }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            ArchSpec::Catalog { .. } => MNIST_INPUT.to_vec(),
            ArchSpec::Mlp { input_dim, .. } => vec![*input_dim],
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ArchSpec::Catalog { .. } => MNIST_CLASSES,
            ArchSpec::Mlp { classes, .. } => *classes,
        }
    }

    /// Layer descriptors with `activation` after every hidden conv/dense layer.
    pub fn layers(&self, activation: Activation) -> Result<Vec<LayerKind>> {
        match self {
            ArchSpec::Catalog { base, disturbing } => {
                let mut v = base.layers(activation);
                if let Some((depth, act)) = *disturbing {
                    for _ in 0..depth {
                        v.extend([LayerKind::dense(DISTURBING_WIDTH), LayerKind::act(act)]);
                    }
                }
                v.push(LayerKind::dense(MNIST_CLASSES));
                Ok(v)
            }
            ArchSpec::Mlp { input_dim, hidden, classes } => {
                if *input_dim == 0 || *classes < 2 {
                    return Err(Error::invalid("mlp needs input_dim >= 1 and at least 2 classes"));
                }
                if hidden.is_empty() || hidden.contains(&0) {
                    return Err(Error::invalid("mlp needs at least one non-empty hidden layer"));
                }
                let mut v = Vec::new();
                for &w in hidden {
                    v.extend([LayerKind::dense(w), LayerKind::act(activation)]);
                }
                v.push(LayerKind::dense(*classes));
                Ok(v)
            }
        }
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArchSpec::Catalog { base, disturbing: None } => f.write_str(base.name()),
            ArchSpec::Catalog { base, disturbing: Some((depth, act)) } => {
                write!(f, "{}+{depth}d{act}", base.name())
            }
            ArchSpec::Mlp { input_dim, hidden, classes } => {
                let widths: Vec<String> = hidden.iter().map(|w| w.to_string()).collect();
                write!(f, "mlp:{input_dim}:{}:{classes}", widths.join(","))
            }
        }
    }
}

impl FromStr for ArchSpec {
    type Err = Error;

    /// Accepts `lenet`, `tiny+20dabs`, `lenet+5drelu`, `mlp:2:5,5:2`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownArch(s.to_string());
        let lower = s.trim().to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("mlp:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let [input, widths, classes] = parts[..] else { return Err(unknown()) };
            let hidden = widths
                .split(',')
                .map(|w| w.parse::<usize>().map_err(|_| unknown()))
                .collect::<Result<Vec<_>>>()?;
            return Ok(ArchSpec::Mlp {
                input_dim: input.parse().map_err(|_| unknown())?,
                hidden,
                classes: classes.parse().map_err(|_| unknown())?,
            });
        }
        let (base, suffix) = match lower.split_once('+') {
            Some((b, sfx)) => (b, Some(sfx)),
            None => (lower.as_str(), None),
        };
        let base: BaseArch = base.parse().map_err(|_| unknown())?;
        let disturbing = match suffix {
            None => None,
            Some(sfx) => {
                let (depth, act) = sfx.split_once('d').ok_or_else(unknown)?;
                let depth = depth.parse::<usize>().map_err(|_| unknown())?;
                Some((depth, act.parse::<Activation>().map_err(|_| unknown())?))
            }
        };
        Ok(ArchSpec::Catalog { base, disturbing })
    }
}

/// An architecture together with its hidden-layer activation; displayed as
/// `<arch>/<activation>`, e.g. `tiny/abs` or `lenet+20drelu/tanh`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub arch: ArchSpec,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn new(arch: ArchSpec, activation: Activation) -> Self {
        ModelSpec { arch, activation }
    }

    /// Network with zeroed parameters; see [`crate::models::init_params`].
    pub fn build<T: Scalar>(&self) -> Result<Network<T>> {
        Network::new(self.to_string(), &self.arch.input_shape(), &self.arch.layers(self.activation)?)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.arch, self.activation)
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (arch, act) = s.rsplit_once('/').ok_or_else(|| Error::UnknownArch(s.to_string()))?;
        Ok(ModelSpec { arch: arch.parse()?, activation: act.parse()? })
    }
}

/// Catalog network by name (`lenet`, `small`, `tiny`, `conv120`,
/// `conv64conv120`, optionally suffixed `+<depth>d<activation>`).
pub fn build_catalog<T: Scalar>(name: &str, activation: Activation) -> Result<Network<T>> {
    let arch: ArchSpec = name.parse()?;
    if matches!(arch, ArchSpec::Mlp { .. }) {
        return Err(Error::UnknownArch(name.to_string()));
    }
    ModelSpec::new(arch, activation).build()
}

/// Dense/activation stack over `input_dim` features ending in a 2-way
/// softmax head.
pub fn build_mlp<T: Scalar>(input_dim: usize, hidden: &[usize], activation: Activation) -> Result<Network<T>> {
    ModelSpec::new(ArchSpec::Mlp { input_dim, hidden: hidden.to_vec(), classes: 2 }, activation).build()
}

/// Hidden width `2N + 1` for an `N`-dimensional input.
pub fn default_hidden_width(input_dim: usize) -> usize {
    2 * input_dim + 1
}

/// A small fully connected 2-D classifier named `<activation><depth>x<width>`,
/// e.g. `abs1x5` or `relu2x5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SimpleNet {
    pub activation: Activation,
    pub depth: usize,
    pub width: usize,
}

impl SimpleNet {
    /// The three 2-D networks: two ReLU hidden layers, one ReLU, one Abs.
    pub const STANDARD: [SimpleNet; 3] = [
        SimpleNet { activation: Activation::Relu, depth: 2, width: 5 },
        SimpleNet { activation: Activation::Relu, depth: 1, width: 5 },
        SimpleNet { activation: Activation::Abs, depth: 1, width: 5 },
    ];

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(ArchSpec::Mlp { input_dim: 2, hidden: vec![self.width; self.depth], classes: 2 }, self.activation)
    }

    pub fn build<T: Scalar>(&self) -> Result<Network<T>> {
        self.spec().build()
    }
}

impl fmt::Display for SimpleNet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}x{}", self.activation, self.depth, self.width)
    }
}

impl FromStr for SimpleNet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("bad network name `{s}` (expected e.g. abs1x5, relu2x5)"));
        let lower = s.trim().to_ascii_lowercase();
        let split = lower.find(|c: char| c.is_ascii_digit()).ok_or_else(bad)?;
        let (act, dims) = lower.split_at(split);
        let (depth, width) = dims.split_once('x').ok_or_else(bad)?;
        let net = SimpleNet {
            activation: act.parse().map_err(|_| bad())?,
            depth: depth.parse().map_err(|_| bad())?,
            width: width.parse().map_err(|_| bad())?,
        };
        if net.depth == 0 || net.width == 0 {
            return Err(bad());
        }
        Ok(net)
    }
}

pub fn count_params<T: Scalar>(net: &Network<T>) -> usize {
    net.count_params()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(name: &str) -> usize {
        build_catalog::<f32>(name, Activation::Tanh).unwrap().count_params()
    }

    #[test]
    fn catalog_counts() {
        assert_eq!(count("lenet"), 368_426);
        assert_eq!(count("small"), 51_890);
        assert_eq!(count("tiny"), 10_615);
        assert_eq!(count("conv120"), 76_226);
        assert_eq!(count("conv64conv120"), 227_474);
        assert_eq!(count("lenet+20dabs"), 511_226);
        assert_eq!(count("lenet+20dabs") - count("lenet"), 20 * (84 * 84 + 84));
    }

    #[test]
    fn mlp_counts() {
        let n = default_hidden_width(2);
        assert_eq!(n, 5);
        assert_eq!(build_mlp::<f32>(2, &[n, n], Activation::Relu).unwrap().count_params(), 57);
        assert_eq!(build_mlp::<f32>(2, &[n], Activation::Abs).unwrap().count_params(), 27);
        assert_eq!(build_mlp::<f32>(2, &[n], Activation::Relu).unwrap().count_params(), 27);
        assert!(build_mlp::<f32>(2, &[], Activation::Relu).is_err());
    }

    #[test]
    fn dense_two_to_five() {
        let net = Network::<f32>::new("d", &[2], &[LayerKind::dense(5)]).unwrap();
        assert_eq!(count_params(&net), 15);
    }

    #[test]
    fn activation_never_changes_count() {
        for base in BaseArch::ALL {
            let counts: Vec<usize> = Activation::ALL
                .iter()
                .map(|&a| build_catalog::<f32>(base.name(), a).unwrap().count_params())
                .collect();
            assert!(counts.windows(2).all(|w| w[0] == w[1]), "{base:?}");
        }
    }

    #[test]
    fn degraded_blocks_sit_before_the_output_layer() {
        let net = build_catalog::<f32>("tiny+20drelu", Activation::Abs).unwrap();
        let kinds = net.kinds();
        assert_eq!(*kinds.last().unwrap(), LayerKind::dense(10));
        let tail = &kinds[kinds.len() - 41..kinds.len() - 1];
        for pair in tail.chunks(2) {
            assert_eq!(pair, [LayerKind::dense(84), LayerKind::act(Activation::Relu)]);
        }
        assert_eq!(kinds[kinds.len() - 43..kinds.len() - 41], [LayerKind::dense(84), LayerKind::act(Activation::Abs)]);
    }

    #[test]
    fn names_round_trip() {
        for s in ["lenet", "tiny+20dabs", "conv64conv120+3dselu", "mlp:2:5,5:2"] {
            assert_eq!(s.parse::<ArchSpec>().unwrap().to_string(), s);
        }
        let m: ModelSpec = "lenet+20dtanh/abs".parse().unwrap();
        assert_eq!(m.to_string(), "lenet+20dtanh/abs");
        assert!(matches!("resnet".parse::<ArchSpec>(), Err(Error::UnknownArch(_))));
        assert!("tiny+20dsigmoid".parse::<ArchSpec>().is_err());
        assert!(build_catalog::<f32>("alexnet", Activation::Abs).is_err());
    }

    #[test]
    fn output_is_ten_logits() {
        for base in BaseArch::ALL {
            let net = build_catalog::<f32>(base.name(), Activation::Abs).unwrap();
            assert_eq!(net.output_shape(), vec![10]);
        }
    }

    #[test]
    fn simple_net_names() {
        let counts: Vec<usize> =
            SimpleNet::STANDARD.iter().map(|n| n.build::<f32>().unwrap().count_params()).collect();
        assert_eq!(counts, vec![57, 27, 27]);
        let n: SimpleNet = "abs1x5".parse().unwrap();
        assert_eq!(n, SimpleNet::STANDARD[2]);
        assert_eq!("relu2x5".parse::<SimpleNet>().unwrap().to_string(), "relu2x5");
        for bad in ["abs", "abs0x5", "foo1x5", "abs1y5", "1x5"] {
            assert!(bad.parse::<SimpleNet>().is_err(), "{bad}");
        }
    }
}
