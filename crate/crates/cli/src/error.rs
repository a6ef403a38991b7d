use std::fmt;
use std::path::Path;

use apc_core::ApcError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Validation,
    /// A criterion or input needs a model family that was not fitted.
    Dependency,
    Sampling,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation | ErrorKind::Dependency => 2,
            ErrorKind::Sampling => 3,
            ErrorKind::Io => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }

    pub fn dependency(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Dependency,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError {
            kind: ErrorKind::Io,
            message: format!("{}: {err}", path.display()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind,
                "exit_code": self.exit_code(),
                "message": self.message,
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ApcError> for CliError {
    fn from(err: ApcError) -> Self {
        let kind = match &err {
            ApcError::Format { .. } | ApcError::Validation(_) | ApcError::Domain(_) => ErrorKind::Validation,
            ApcError::Evaluation { .. } | ApcError::Start { .. } | ApcError::Adaptation { .. } => ErrorKind::Sampling,
            ApcError::Io { .. } => ErrorKind::Io,
        };
        CliError {
            kind,
            message: err.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
