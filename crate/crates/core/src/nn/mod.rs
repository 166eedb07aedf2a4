//! Small fully connected network with exact gradients.

pub mod loss;
mod matrix;
mod mlp;
pub mod optim;

pub use loss::{binary_logistic_grad, entropy, sigmoid, softmax, softmax_xent, XentOutput};
pub use matrix::Matrix;
pub(crate) use matrix::{dot, sq_norm};
pub use mlp::{Dense, ForwardCache, ForwardMode, GradScope, Gradients, Mlp, ModelSnapshot};
pub use optim::{sgd_step, sgd_step_dense, sgd_step_model, Adam, AdamConfig};
