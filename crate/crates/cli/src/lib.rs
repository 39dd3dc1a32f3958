//! Batch front end: configuration, subcommands and output files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{CliError, CliResult};
pub use config::ExperimentConfig;
