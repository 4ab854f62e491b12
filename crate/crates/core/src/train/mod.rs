//! Normalisation, optimisers, checkpoints and the training loops.

pub mod checkpoint;
pub mod norm;
pub mod optim;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use norm::NormStats;
pub use optim::{Optimizer, OptimizerKind};
pub use trainer::{
    decoder_loss, downsample, downsample_stratified, encoder_loss, fit, loss_recon, train_decoder,
    train_encoder, FitLog, GradMode, LossCurve, TrainConfig,
};
