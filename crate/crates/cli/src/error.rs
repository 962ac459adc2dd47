use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: `{field}`: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, field: String, message: String },
    #[error("numeric failure: {0}")]
    Numeric(#[from] rem_glass::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn config(line: Option<usize>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { line, field: field.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config { .. } | CliError::Io { .. } => ExitCode::from(2),
            CliError::Numeric(_) => ExitCode::from(3),
        }
    }
}
