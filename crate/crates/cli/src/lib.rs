//! Library side of the `tokenwalk` command: configuration, run manifests
//! and the pipeline stages.

pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
