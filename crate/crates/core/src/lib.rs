//! Walsh-target convolutional feature extractors classified by a
//! minimum-distance network, with scatter-based divergence analysis, signal
//! augmentation, training with layer growing, and checkpointing.

pub mod arch;
pub mod augment;
pub mod checkpoint;
pub mod data;
pub mod divergence;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod mdn;
pub mod numerics;
pub mod seed;
pub mod trainer;
pub mod walsh;

pub use arch::ModelSpec;
pub use augment::AugmentConfig;
pub use checkpoint::Checkpoint;
pub use data::{LabeledDataset, SplitSpec, Standardizer};
pub use divergence::{CenterSource, ScatterReport};
pub use error::{Error, Result};
pub use layers::{FeatureExtractorModel, InputShape, LayerSpec};
pub use numerics::Tensor;
pub use trainer::{TrainConfig, TrainReport};
pub use walsh::{WalshCodebook, WalshMatrix};
