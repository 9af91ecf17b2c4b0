//! Learned estimators over the encodings of `wahls-core`: a GATv2 graph
//! network, a CLS-token transformer encoder and a per-target MLP baseline,
//! together with the autodiff tape, training loop and checkpoint format.

pub mod checkpoint;
pub mod gnn;
pub mod mlp;
pub mod model;
pub mod nn;
pub mod params;
pub mod tape;
pub mod train;
pub mod transformer;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError};
pub use model::{ModelKind, Network, PredictionError, TrainedModel};
pub use train::{train, train_with, LossKind, TrainConfig, TrainError};
