//! Labeled datasets, non-IID partitioners, and the per-client 8:2 split.

mod dataset;
mod partition;

pub use dataset::{gen_synthetic, LabeledDataset};
pub use partition::{
    label_entropy, partition_class_count, partition_dirichlet, split_train_test, ClientIndices,
    NonIidSpec, NonIidVariant, PartitionPlan, DIRICHLET_MAX_ATTEMPTS, MIN_CLIENT_SAMPLES,
};
