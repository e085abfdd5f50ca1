//! Neural network language models built from scratch: feed-forward,
//! recurrent and LSTM cores with hand-derived gradients, class-factored and
//! hierarchical output layers, importance-sampled training, cache models,
//! state carryover, reversed-order and dynamic evaluation.
//!
//! All numeric code is generic over [`numerics::Scalar`]; the aliases at the
//! crate root fix it to `f64`, which is what the CLI and artifacts use.

pub mod artifact;
pub mod caching;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod models;
pub mod numerics;
pub mod output;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};

pub type Matrix = numerics::Matrix<f64>;
pub type Network = models::Network<f64>;
pub type GradientSet = models::GradientSet<f64>;
pub type HiddenState = models::HiddenState<f64>;
pub type OutputParameters = output::OutputParameters<f64>;

pub type Network32 = models::Network<f32>;
