//! Experiment runner for the `hwlab` queue laboratory: JSON configs in,
//! CSV tables and a digest-stamped run record out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod record;
pub mod sandwich;

pub use config::{Experiment, ExperimentConfig};
pub use error::{CliError, Result};
