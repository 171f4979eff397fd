//! Multi-class prediction on purely categorical tables.
//!
//! Categorical encoders, an entity-embedding neural engine with dense and
//! 1D-convolutional trunks, classical baselines, a three-stage chained
//! predictor, staged grid search and a synthetic generator with a known
//! Bayes accuracy.

pub mod artifact;
pub mod baselines;
pub mod columns;
pub mod encoders;
mod error;
pub mod ingest;
pub mod neural;
pub mod pipeline;
pub mod rng;
pub mod schema;
pub mod search;
pub mod tensor;

pub use error::{Error, Result};
