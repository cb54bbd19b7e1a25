//! Cartoon-face recognition toolkit.
//!
//! * [`nn`]: a small reverse-mode tensor engine (conv, pooling, batch norm,
//!   dense layers, dropout, losses, Adam / Nesterov SGD).
//! * [`models`]: the hybrid pixel + landmark CNN and the landmark regressor.
//! * [`data`]: image normalization, landmark tables, augmentation, balancing and splits.
//! * [`shallow`]: RBF SVM (SMO), multinomial gradient boosting, scaling and grid search.
//! * [`metrics`]: recognition, landmark and detection measures.

pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
mod seed;
pub mod shallow;

pub use error::{Error, Result};
pub use nn::{Mode, Tensor};
