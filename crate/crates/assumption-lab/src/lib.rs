//! Assumption-based learning: a learner who updates as if an identifying
//! assumption held exactly, provided the assumption passes an f-divergence
//! plausibility gate.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beliefs;
pub mod distributions;
pub mod divergence;
pub mod engine;
pub mod error;
pub mod graph;
pub mod parallel;
pub mod scenarios;
pub mod stable;

pub use error::{Error, Result};
