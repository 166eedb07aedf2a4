//! Pool-based active learning that looks for pool samples the current model
//! most likely gets wrong.
//!
//! For each unlabeled candidate the model's own prediction is taken as a
//! pseudo label, the output layer is fine-tuned on it for a few SGD steps,
//! and the resulting change of the loss on a small labeled holdout set is
//! the acquisition score: a pseudo label that hurts the holdout set is
//! probably wrong, so the candidate is worth annotating. A first-order
//! variant replaces the fine-tuning by a gradient dot product. Random,
//! entropy, MC-dropout, BALD, core-set, BADGE and expected-error-reduction
//! baselines share the same interfaces.
//!
//! Everything numeric is generic over [`Real`] (`f64` or `f32`); the `*F64`
//! and `*F32` aliases below name the common instantiations.
//!
//! Modules:
//! - [`nn`]: MLP, losses, gradients, SGD/Adam, MC dropout.
//! - [`data`]: IDX/CSV/synthetic datasets, balanced and imbalanced splits,
//!   the annotation oracle.
//! - [`strategies`]: acquisition criteria and selection.
//! - [`engine`]: training to convergence and the annotation loop.

pub mod data;
pub mod engine;
mod error;
pub mod nn;
pub mod rng;
mod scalar;
pub mod strategies;

pub use error::{Error, Result};
pub use scalar::Real;

pub type MatrixF64 = nn::Matrix<f64>;
pub type MatrixF32 = nn::Matrix<f32>;
pub type MlpF64 = nn::Mlp<f64>;
pub type MlpF32 = nn::Mlp<f32>;
pub type SnapshotF64 = nn::ModelSnapshot<f64>;
pub type SnapshotF32 = nn::ModelSnapshot<f32>;
pub type DatasetF64 = data::Dataset<f64>;
pub type DatasetF32 = data::Dataset<f32>;
pub type HoldoutCacheF64 = strategies::HoldoutCache<f64>;
pub type HoldoutCacheF32 = strategies::HoldoutCache<f32>;
