//! Multimodal movie-trailer genre classification.
//!
//! The pipeline turns each trailer into three text streams (situations seen
//! in sampled frames, dialogue transcribed from audio chunks, and IMDB-style
//! metadata), fuses them into one corpus, and trains a small from-scratch
//! network to emit five independent genre probabilities.
//!
//! Numerical code (`nn`, `models`, `metrics`) is generic over a [`Scalar`]
//! type; the aliases below pin the common instantiations.

pub mod corpus;
pub mod manifest;
pub mod media;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod scalar;
pub mod textprep;
pub mod tfidf;

pub use manifest::{Genre, LabelVector, TrailerRecord, GENRES, NUM_GENRES};
pub use scalar::Scalar;

/// Double-precision tensor, the training default.
pub type Tensor = nn::Tensor2<f64>;
/// Single-precision tensor.
pub type Tensor32 = nn::Tensor2<f32>;
/// Double-precision network.
pub type Network = nn::Network<f64>;
/// Single-precision network.
pub type Network32 = nn::Network<f32>;
/// Double-precision Adam state.
pub type AdamState = nn::AdamState<f64>;
/// Double-precision trained model.
pub type TrainedModel = models::TrainedModel<f64>;
/// Double-precision PR curve.
pub type PrCurve = metrics::PrCurve<f64>;
/// Double-precision scored prediction.
pub type ScoredPrediction = metrics::ScoredPrediction<f64>;
