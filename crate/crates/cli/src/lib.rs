//! Library half of the `ade` command-line tool. Each subcommand is a plain
//! function over a clap `Args` struct so it can be driven from tests.

pub mod commands;
pub mod dataset;
pub mod error;
pub mod output;

pub use error::{CliError, CliResult};
