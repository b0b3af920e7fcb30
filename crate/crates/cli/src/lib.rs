//! Batch driver for the sesmap pipeline: configuration, stages and report
//! rendering.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod pipeline;
pub mod render;

pub use config::{ConfigError, RunConfig};
pub use pipeline::{run_pipeline, Stage, StageError};
