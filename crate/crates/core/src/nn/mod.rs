//! Dense feedforward networks: forward/backward passes, per-sample scores,
//! Adam training with early stopping, and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod net;
pub mod scores;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use loss::{Batch, LossKind};
pub use net::{Activation, Dense, DenseNet, ForwardCache, LayerSpan};
pub use scores::{batch_loss_gradient, mean_loss, per_sample_scores, ParamPartition, ScoreMatrix};
pub use train::{train, train_dense, DenseObjective, Objective, TrainConfig, TrainHistory};
