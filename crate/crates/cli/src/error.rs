use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{0}")]
    Other(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::MissingFile(_) => 3,
            CliError::Schema(_) => 4,
            CliError::Data(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingFile(_) => "missing_file",
            CliError::Schema(_) => "schema",
            CliError::Data(_) => "data",
            CliError::Other(_) => "other",
        }
    }

    /// One-line JSON diagnostic for stderr.
    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: &'a str,
            exit_code: i32,
            message: String,
        }
        serde_json::to_string(&Record {
            error: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        })
        .expect("record serializes")
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        if err.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingFile(path.to_path_buf())
        } else {
            CliError::Other(format!("{}: {err}", path.display()))
        }
    }
}

impl From<session_planner::Error> for CliError {
    fn from(err: session_planner::Error) -> Self {
        use session_planner::Error as E;
        match err {
            E::Config(m) => CliError::Config(m),
            E::Schema(_) | E::Json(_) => CliError::Schema(err.to_string()),
            E::Io(e) => CliError::Other(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
