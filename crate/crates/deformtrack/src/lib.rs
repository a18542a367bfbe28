//! File formats, run configuration and the batch pipeline around
//! `deformtrack-core`.
//!
//! - [`config`]: the JSON run configuration.
//! - [`ply`], [`depth`], [`matches`]: surface, depth-map and match files.
//! - [`pipeline`]: `track`, `synth`, `eval` and `preselect` over files.

// `!(x > 0.0)` is used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod depth;
pub mod error;
pub mod matches;
pub mod pipeline;
pub mod ply;

pub use error::{Error, Result};
