//! Full model assembly, objectives, training and evaluation.

mod check;
pub mod checkpoint;
mod eval;
mod forward;
mod loss;
mod params;
mod train;

pub use check::{gradient_check, GroupError, CHECK_STEP, GRADIENT_FLOOR};
pub use eval::{evaluate, infer, mae_rmse, predict_window, ErrorStats, Evaluation};
pub use forward::{forward_window, ForwardOutput};
pub use loss::{compute_losses, LossValues, Losses};
pub use params::{latent_count, BoundModel, ModelConfig, ModelParams, Variant};
pub use train::{
    evaluation_records, loss_and_gradients, render_metrics, train, MetricRecord, TrainConfig, TrainReport,
    METRICS_HEADER,
};
