use std::path::{Path, PathBuf};

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Exit code for a clean run.
pub const EXIT_OK: i32 = 0;
/// Malformed input rows, data, parameter or domain errors.
pub const EXIT_DATA: i32 = 2;
/// Missing files, unreadable or inconsistent configuration.
pub const EXIT_CONFIG: i32 = 3;
/// The monotone-in-green audit found violations.
pub const EXIT_AUDIT: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: u64, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] sigfd_core::Error),
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Audit(String),
}

impl CliError {
    pub fn parse(path: &Path, line: u64, reason: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            line,
            reason: reason.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Mismatch(_) => EXIT_DATA,
            CliError::Io { .. } | CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(sigfd_core::Error::Config(_)) => EXIT_CONFIG,
            CliError::Core(_) => EXIT_DATA,
            CliError::Audit(_) => EXIT_AUDIT,
        }
    }
}
