//! Ten-year cardiovascular risk from pulse waveforms.
//!
//! The pipeline turns single-beat PPG waveforms into embeddings with a small
//! residual CNN, reduces them to five principal components, and feeds those
//! with demographic covariates into a ridge-penalized Cox model. The
//! [`metrics`] module holds the evaluation harness used to compare models.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cohort;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod signal;
pub mod stats;
pub mod survival;

pub use error::{Error, Result};
