//! Command-line driver for `hjarl-core`: run configuration, artifact formats, the
//! `solve`/`train`/`eval`/`heatmap` verbs and the WebSocket game service.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod serve;
pub mod vf;

pub use config::RunConfig;
pub use error::{CliError, Result};
