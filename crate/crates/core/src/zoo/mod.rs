//! The desk-scale model zoo: datasets, architectures, training, and the
//! NNWT weight file format.

pub mod arch;
pub mod dataset;
pub mod idx;
pub mod train;
pub mod weights;

pub use arch::{build_architecture, ZOO_ARCH_IDS};
pub use dataset::{
    generate_synthetic_dataset, DataSource, DataSplit, Dataset, DatasetSpec, SHAPE_CLASS_COUNT,
};
pub use idx::{
    ingest_idx, read_idx_f32_images, write_idx_f32_images, write_idx_images, write_idx_labels,
};
pub use train::{accuracy, train_classifier, TrainConfig};
pub use weights::{load_weights, save_weights};
