//! One-class network anomaly detection trained on benign flows only.
//!
//! A bias-free feed-forward network is trained to pull benign flow features
//! toward a fixed hypersphere center ([`svdd`]). Its embeddings are then
//! summarised by per-dimension equal-width histograms ([`hbos`]) and a flow's
//! anomaly score is the sum of log inverse bin heights. [`pipeline::DocModel`]
//! bundles both stages with the min-max scaler and a decision threshold.
//!
//! [`data`] covers CSV ingestion and the benign-only split, [`eval`] the
//! metrics, baselines and cross-validation harness.

pub mod data;
pub mod error;
pub mod eval;
pub mod hbos;
pub mod matrix;
pub mod nn;
pub mod pipeline;
pub mod stats;
pub mod svdd;

pub use error::{Error, ModelError, Result};
pub use matrix::Matrix;
