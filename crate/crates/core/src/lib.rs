//! Machine unlearning on a small byte-level language model.

// `!(x > 0.0)` is the NaN-rejecting form used throughout input validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod divergence;
pub mod error;
pub mod estimator;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod trainer;

pub use error::{Error, Result};
