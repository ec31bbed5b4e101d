use std::io;
use std::path::Path;
use std::process::ExitCode;

use floorloc_core::Error;
use serde::Serialize;

/// A failed run: exit status plus the JSON written to stderr.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "config",
            message: message.into(),
        }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            kind: "missing-input",
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            kind: "runtime",
            message: message.into(),
        }
    }

    pub fn from_io(path: &Path, e: io::Error) -> Self {
        let message = format!("{}: {e}", path.display());
        if e.kind() == io::ErrorKind::NotFound {
            Self::missing(message)
        } else {
            Self::runtime(message)
        }
    }

    pub fn report(&self) -> ExitCode {
        let doc = serde_json::json!({ "error": self });
        eprintln!("{doc}");
        ExitCode::from(self.code)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match &e {
            Error::Config(_) => Self::config(e.to_string()),
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => Self::missing(e.to_string()),
            _ => Self::runtime(e.to_string()),
        }
    }
}
