//! Tangent bundle neural networks on a fixed shift operator.

mod adam;
mod model;
mod train;

pub use adam::AdamState;
pub use model::{
    Architecture, Checkpoint, CheckpointLayer, ForwardCache, Gradients, Nonlinearity, TnnLayerParams,
    TnnModel,
};
pub use train::{
    evaluate_mse, mnn_baseline, scalar_shift, train_denoiser, train_mnn, train_network, EpochLoss,
    MnnOutcome, TrainConfig, TrainOutcome,
};
