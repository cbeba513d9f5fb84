//! Command-line runner for continuation knowledge distillation: TOML run
//! configs, checkpoint and dataset files, metrics CSVs, ablations, seed
//! sweeps and smoothness reports on top of `contkd-core`.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablate;
pub mod cli;
pub mod config;
pub mod error;
pub mod format;
pub mod metrics;
pub mod run;
pub mod smoothness;
pub mod sweep;

pub use error::{AppError, Result};
