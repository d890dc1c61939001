use std::path::PathBuf;

use pcons_core::Error as CoreError;

/// Process exit status by outcome class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[repr(i32)]
pub enum ExitCode {
    Success = 0,
    VerificationFailed = 1,
    Input = 2,
    Invariant = 3,
    Infeasible = 4,
    Integration = 5,
}

impl ExitCode {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Input(_) => ExitCode::Input,
            CliError::Core(e) => match e {
                CoreError::Dimension(_) | CoreError::Parameter(_) | CoreError::NonFinite(_) | CoreError::Size(_) => {
                    ExitCode::Input
                }
                CoreError::Invariant(_) | CoreError::Structure(_) | CoreError::Degenerate(_) => ExitCode::Invariant,
                CoreError::Infeasible { .. } => ExitCode::Infeasible,
                CoreError::Integration { .. } => ExitCode::Integration,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
