//! Prediction churn between independently trained classifiers, and the
//! training objectives that reduce it.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: a small deterministic reverse-mode autodiff tape, dense tanh
//!   networks, SGD with Nesterov momentum and learning-rate schedules.
//! - [`metrics`]: churn, surrogate churn, confidence, slice churn,
//!   distribution distances, ECE and executable bound audits.
//! - [`losses`]: cross-entropy, minimum-entropy and SKL regularizers,
//!   co-distillation variants, the combined objective and distillation.
//! - [`data`]: synthetic blobs, CSV ingestion and the seeded randomness
//!   channels (initialization, minibatch order, augmentation).
//! - [`harness`]: training runs, multi-seed experiments, the seed ablation
//!   grid, ensemble distillation, artifacts and reports.

pub mod data;
pub mod digest;
pub mod error;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod tensor;

pub use error::{Error, Result};

/// Probability floor applied (with row renormalization) before any logarithm.
pub const PROB_EPS: f64 = 1e-7;
