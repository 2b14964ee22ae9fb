//! Datasets: MNIST IDX ingestion, sequential splits, seeded batching and
//! the 2-D synthetic tasks.

mod dataset;
pub mod idx;
mod synth;

pub use dataset::{batches, split_train_val, Dataset, SplitSpec};
pub use idx::{load_idx_images, load_idx_labels, load_mnist, mnist_paths, write_idx_images, write_idx_labels, MnistPart};
pub use synth::{synth_dataset, SynthKind, CIRCLE_RADIUS_SQ, DEFAULT_SYNTH_SIZE};
