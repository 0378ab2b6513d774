//! Configuration parsing, run orchestration and file output for the
//! `cuspwave` command.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{CliError, Outcome};
pub use config::RunConfig;
