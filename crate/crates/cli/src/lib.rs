//! Command-line driver: `gen`, `train`, `eval`, `check` and `hist`.
//!
//! Exit codes: 0 success, 1 failure (including property failures), 2 config
//! error, 3 missing input artifact, 4 checkpoint/dataset shape mismatch.

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
