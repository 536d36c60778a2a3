//! Command implementations and the HTTP service behind the `ocscreen` binary.

pub mod commands;
pub mod error;
pub mod service;

pub use error::CliError;
