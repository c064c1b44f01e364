use std::fmt;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Invalid configuration or flags (exit 1).
    Config,
    /// Missing, malformed or inconsistent data or artifacts (exit 2).
    Data,
    /// Training diverged (exit 3).
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ErrorKind::Config => "config_error",
            ErrorKind::Data => "data_error",
            ErrorKind::Numerical => "numerical_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    /// The flag or config key at fault, when there is one.
    pub field: Option<String>,
    pub path: Option<String>,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: message.into(),
            field: None,
            path: None,
        }
    }

    pub fn config_field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: Some(field.into()),
            ..Self::config(message)
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            ..Self::config(message)
        }
    }

    pub fn with_path(mut self, path: &Path) -> Self {
        self.path = Some(path.display().to_string());
        self
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// Single-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({
            "error": self.kind.label(),
            "exit_code": self.exit_code(),
            "message": self.message,
        });
        if let Some(f) = &self.field {
            v["field"] = json!(f);
        }
        if let Some(p) = &self.path {
            v["path"] = json!(p);
        }
        v.to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Library errors raised while a stage runs are data or numerical
/// failures. Configuration is validated before any stage starts.
impl From<episim_core::Error> for CliError {
    fn from(e: episim_core::Error) -> Self {
        let kind = if e.is_numerical() { ErrorKind::Numerical } else { ErrorKind::Data };
        Self {
            kind,
            message: e.to_string(),
            field: None,
            path: None,
        }
    }
}
