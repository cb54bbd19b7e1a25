//! Differentiable tensor engine: layers, losses, initializers and optimizers.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod graph;
pub mod init;
mod linalg;
pub mod loss;
pub mod norm;
pub mod optim;
pub mod param;
pub mod pool;
pub mod tensor;

pub use activation::{dropout, leaky_relu, softmax};
pub use conv::conv2d_forward;
pub use dense::{dense_forward, Activation};
pub use graph::{Gradients, Graph, NodeId};
pub use init::{glorot_limit, glorot_uniform_init};
pub use loss::{masked_mse, one_hot, softmax_cross_entropy};
pub use norm::{batchnorm_forward, BatchNormState};
pub use optim::{
    plateau_lr_schedule, Adam, AdamConfig, Optimizer, PlateauConfig, PlateauSchedule, SgdConfig, SgdNesterov,
};
pub use param::{ParamId, ParamStore, Parameter};
pub use pool::maxpool2d_forward;
pub use tensor::Tensor;

/// Train mode uses batch statistics and live dropout; infer mode neither.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Infer,
}
