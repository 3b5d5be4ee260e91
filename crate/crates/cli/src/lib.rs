//! Command-line front end: experiment configs, execution and CSV output.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use error::CliError;
