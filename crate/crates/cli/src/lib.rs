//! Command implementations and the survey HTTP service behind the `outfitgen` binary.

pub mod commands;
pub mod config;
pub mod server;

pub use commands::{Status, UsageError};
pub use config::RunConfig;
