//! Smart chaptering toolkit.
//!
//! * [`corpus`] turns WebVTT captions plus chapter lists into
//!   sentence-aligned, boundary-labeled documents, and builds splits,
//!   statistics, the titles view and synthetic corpora.
//! * [`autograd`] is a small reverse-mode autodiff engine.
//! * [`model`] is the hierarchical segmenter (sentence encoder, mean
//!   pooling, rotary document encoder) with offline, causal and
//!   bounded-future attention masks, plus streaming inference.
//! * [`training`] fits the segmenter with weighted cross-entropy,
//!   gradient sampling, AdamW and a cosine schedule.
//! * [`metrics`] scores segmentations (P/R/F1, P_k, Boundary Similarity,
//!   bootstrap deviations).
//! * [`titling`] builds title-generation inputs, an extractive baseline
//!   titler and ROUGE.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the width for the common cases.

// Negated comparisons reject NaN; index loops walk parallel arrays.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity,
    clippy::should_implement_trait
)]

pub mod autograd;
pub mod corpus;
pub mod metrics;
pub mod model;
mod scalar;
pub mod titling;
pub mod training;

pub use scalar::Scalar;

/// Tool version reported by the CLI.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Tensor64 = autograd::Tensor<f64>;
pub type Tensor32 = autograd::Tensor<f32>;
pub type Graph64 = autograd::Graph<f64>;
pub type Segmenter64 = model::Segmenter<f64>;
pub type Segmenter32 = model::Segmenter<f32>;
