//! Experimentation harness for human activity recognition from wearable
//! sensors: five model families with exact hand-written gradients, the
//! dataset pipelines, F1 metrics, randomised hyperparameter search and a
//! variance-based importance analysis of the results.

pub mod data;
pub mod error;
pub mod hypersearch;
pub mod metrics;
pub mod models;
pub mod tensor;
pub mod training;

pub use error::{HarError, Result};
pub use tensor::{matmul, Tensor};
