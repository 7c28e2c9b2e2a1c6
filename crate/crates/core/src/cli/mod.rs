//! Command-line front end: configuration, file formats and subcommands.

pub mod commands;
pub mod config;
pub mod io;

pub use commands::{run, Command};
pub use config::{ConfigBuilder, RunConfig};
