// Numeric kernels index several arrays in lockstep, and `!(x > 0.0)` is
// used on purpose so NaN fails validation.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod estimator;
pub mod error;
pub mod exec;
pub mod io;
pub mod metrics;
pub mod model;
pub mod ordination;
pub mod simulation;
pub mod special;

pub use error::{GllvmError, Result};
