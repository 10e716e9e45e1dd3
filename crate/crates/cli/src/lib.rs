// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! File formats, run configuration and subcommands for the `seqtr` binary.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod jsonio;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
