//! A small fixed-topology training engine: tensors, temporal convolutions,
//! dense layers, dropout, cross-entropy, RMSProp and gradient checking.
//!
//! Kernels are generic over [`Real`] so the same code path runs in f32 for
//! training and in f64 for finite-difference verification.

mod gradcheck;
mod init;
mod layers;
mod model;
mod optim;
mod tensor;
mod train;

use thiserror::Error;

pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport, TensorCheck};
pub use init::{gram_deviation, orthonormal_init};
pub use layers::{
    conv_backward, conv_forward, dense_backward, dense_forward, dropout_apply, gaussian_noise_augment, softmax_row,
    softmax_xent, Activation, LayerGrads, LayerSpec, NamedLayer, DEFAULT_FILTERS, DEFAULT_KERNEL,
};
pub use model::{backward, batch_input, forward, forward_train, relu_pattern, Cache};
pub use optim::{OptimizerState, RmsProp};
pub use tensor::{ParamSet, Tensor};
pub use train::{
    evaluate, predict, select_learning_rate, select_learning_rate_by, train, EpochRecord, LrSelection, Prediction,
    TrainConfig, TrainOutcome,
};

/// Deterministic, portable generator used for every seeded stream.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Scalar type of the engine: `f32` for training, `f64` for verification.
pub trait Real:
    num_traits::Float
    + Default
    + std::fmt::Debug
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateKey(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error("activation cache does not match the graph: {0}")]
    Cache(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("every learning rate diverged")]
    AllDiverged,
    #[error("empty dataset: {0}")]
    EmptyData(String),
}
