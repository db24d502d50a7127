//! Library side of the `varme` command: ingestion, configuration and subcommands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod data;
pub mod error;

pub use config::RunConfig;
pub use error::CliError;
