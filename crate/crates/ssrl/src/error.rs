use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::Serialize;
use thiserror::Error;

/// Command failure, mapped onto the documented exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Degenerate(_) => "degenerate",
            CliError::Io { .. } => "io",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Degenerate(_) => 4,
            CliError::Io { .. } | CliError::Runtime(_) => 1,
        }
    }

    /// One JSON object for stderr.
    pub fn to_json(&self, command: &str) -> String {
        #[derive(Serialize)]
        struct Structured<'a> {
            command: &'a str,
            kind: &'a str,
            exit_code: u8,
            message: String,
        }
        let s = Structured { command, kind: self.kind(), exit_code: self.exit_code(), message: self.to_string() };
        serde_json::to_string(&s).expect("plain struct serializes")
    }
}

impl From<CliError> for ExitCode {
    fn from(e: CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
