//! Architecture catalog, parameter initialization and checkpoints.

mod arch;
mod checkpoint;
mod init;

pub use arch::{
    build_catalog, build_mlp, count_params, default_hidden_width, ArchSpec, BaseArch, ModelSpec, SimpleNet,
    DEFAULT_DISTURBING_DEPTH, DISTURBING_WIDTH, MNIST_CLASSES, MNIST_INPUT,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, FORMAT_VERSION, MAGIC};
pub use init::init_params;
