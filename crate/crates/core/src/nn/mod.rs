//! Tensors, layers and the sequential network with exact reverse-mode
//! gradients.

mod activation;
pub mod conv;
pub mod dense;
mod layer;
mod loss;
mod network;
pub mod pool;
mod tensor;

pub use activation::{Activation, SELU_ALPHA, SELU_LAMBDA};
pub use conv::Padding;
pub use layer::{Layer, LayerGradients, LayerKind};
pub use loss::{softmax, softmax_xent};
pub use network::{flatten_param_grads, param_name, Network};
pub use tensor::Tensor;
