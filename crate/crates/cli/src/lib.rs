//! Library side of the `bbrank` command-line tool.

pub mod bench;
pub mod config;
pub mod landscape;
pub mod output;
pub mod verify;

mod commands;

pub use commands::{run, Cli, Command, Format, Outcome, UsageError};
