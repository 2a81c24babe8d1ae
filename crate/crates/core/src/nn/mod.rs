//! Small reverse-mode engine for fixed layer stacks.
//!
//! Supports embedding, same-padded 1-D convolution, max pooling, flatten,
//! dense, dropout and activation layers, a multi-label binary cross-entropy
//! loss, and Adam. Everything is generic over [`crate::Scalar`].

mod adam;
mod layers;
mod loss;
mod network;
mod tensor;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use layers::{
    relu, sigmoid, Activation, Cache, GradAt, Layer, LayerInput, LayerSpec, Mode, Shape,
};
pub use loss::{bce_multilabel, PROB_CLAMP};
pub use network::{ForwardTrace, Gradients, InputSpec, LayerSummary, NetInput, Network};
pub use tensor::Tensor2;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("token index {index} outside embedding table with {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
