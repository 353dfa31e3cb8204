use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures surfaced by the commands, each tied to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing input {}: {reason}", path.display())]
    Missing { path: PathBuf, reason: String },
    #[error("{}: {message}", path.display())]
    Schema { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Training(String),
    #[error("{0}")]
    ModelMismatch(String),
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Missing { .. } | CliError::Usage(_) => 2,
            CliError::Schema { .. } | CliError::Config(_) => 3,
            CliError::Training(_) => 4,
            CliError::ModelMismatch(_) => 5,
            CliError::Io { .. } => 1,
        }
    }

    pub fn missing(path: &Path, reason: impl ToString) -> Self {
        CliError::Missing { path: path.to_path_buf(), reason: reason.to_string() }
    }

    pub fn schema(path: &Path, message: impl ToString) -> Self {
        CliError::Schema { path: path.to_path_buf(), message: message.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::missing(path, "file not found"),
        _ => CliError::Io { path: path.to_path_buf(), source: e },
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).map_err(|_| CliError::schema(path, "not valid UTF-8"))
}

/// Writes `bytes`, creating parent directories.
pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}
