//! Absolute-value activation networks on the CPU: layers with exact
//! gradients, the LeNet-family catalog, a learning-rate staircase trainer
//! driven by validation lower-bound accuracy estimates, bootstrap summaries
//! and ensemble tools.
//!
//! The numeric core is generic over [`Scalar`]; training runs in `f32` and
//! gradient verification in `f64`. Aliases for both are exported at the
//! crate root.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod models;
pub mod nn;
pub mod optim;
pub mod probe;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
