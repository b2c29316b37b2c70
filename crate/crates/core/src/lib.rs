//! Differencing-based contrastive anomaly detection for multivariate time series.

pub mod data;
pub mod error;
pub mod eval;
pub mod harness;
pub mod model;
pub mod objective;
pub mod tensor;

pub use error::{Error, Result};
