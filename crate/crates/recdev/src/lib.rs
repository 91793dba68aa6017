//! Command-line front end for `recdev-core`: configuration files, hypothesis
//! checks, a thread-pool replication runner and CSV/JSON output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod observations;
pub mod output;
pub mod runner;
pub mod validate;

pub use commands::{run, Invocation, Outcome};
pub use config::{ExperimentConfig, FlatConfig};
pub use runner::RayonRunner;
pub use validate::{validate, Subcommand, Violation};
