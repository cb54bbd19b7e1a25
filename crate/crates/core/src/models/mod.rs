//! The hybrid CNN recognizer, the landmark regressor, their training loops
//! and (de)serialization.

pub mod container;
pub mod hcnn;
pub mod landmark_net;
pub mod predict;
pub mod train;

use std::path::Path;

pub use container::Container;
pub use hcnn::{hcnn_loss, hcnn_loss_with, Hcnn, HcnnConfig, HcnnForward};
pub use landmark_net::{LandmarkNet, LandmarkNetConfig};
pub use predict::{predict, predict_proba, rank_row, Ranking};
pub use train::{
    convergence_epoch, evaluate_hcnn, landmark_rmse_px, train_hcnn, train_landmark_net, EpochRecord, EvalStats,
    HcnnData, LandmarkData, LandmarkTrainRun, StepRecord, TrainConfig, TrainRun,
};

use crate::error::Result;

/// 15 points × (x, y).
pub const NUM_LANDMARK_FEATURES: usize = 30;
/// Coordinates are scaled as `(c - 48) / 48` for the networks.
pub const COORD_SCALE: f64 = 48.0;

pub fn scale_coord(c: f64) -> f64 {
    (c - COORD_SCALE) / COORD_SCALE
}

pub fn unscale_coord(s: f64) -> f64 {
    s * COORD_SCALE + COORD_SCALE
}

pub fn save_model(model: &Hcnn, path: impl AsRef<Path>) -> Result<()> {
    model.to_container().save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Hcnn> {
    Hcnn::from_container(&Container::load(path)?)
}
