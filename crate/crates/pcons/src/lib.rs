//! File formats and commands behind the `pcons` binary.

pub mod commands;
pub mod error;
pub mod gains;
pub mod output;
pub mod report;
pub mod scenario;

pub use error::{CliError, ExitCode};
pub use scenario::{Loaded, ScenarioFile};
