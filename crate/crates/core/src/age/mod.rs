//! Proxy age regressor and its band-weighted, self-adjusting smoothed L1 loss.

mod beta;
mod loss;
mod model;
mod train;

pub use beta::{BetaConfig, SelfAdjustingBeta};
pub use loss::{band_weight, smoothed_l1, smoothed_l1_grad, weighted_loss, WEIGHTED_BAND, WEIGHTED_BAND_FACTOR};
pub use model::{AgeRegressor, AgeRegressorConfig, AGE_REGRESSOR_KIND};
pub use train::{
    train_age_estimator, write_metrics_csv, AgeSample, EpochMetrics, TrainConfig, TrainOutcome,
};
