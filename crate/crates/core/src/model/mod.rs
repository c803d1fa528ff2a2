//! Classification and segmentation pipelines, training, evaluation and checkpoints.

pub mod checkpoint;
mod config;
pub mod data;
mod metrics;
mod net;
mod train;

pub use config::{parse_key_values, ModelConfig, PoolKind, Task};
pub use metrics::{accuracy, mean_iou, shape_iou};
pub use net::{argmax, cross_entropy, Head, Model, ModelTape, Prepared, Target};
pub use train::{evaluate, evaluate_prepared, prepare_all, train, EpochRecord, Sgd, TrainConfig};
