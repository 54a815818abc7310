use serde::Serialize;

/// Failure category; decides the exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Validation,
    Io,
    Resource,
    Convergence,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    /// JSON path into the scenario, when the error is tied to one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Validation, message: message.into(), path: None }
    }

    pub fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Validation, message: message.into(), path: Some(path.into()) }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Io, message: message.into(), path: None }
    }

    /// Attach a path unless one is already set.
    pub fn with_path(mut self, path: impl Into<String>) -> Self {
        if self.path.is_none() {
            self.path = Some(path.into());
        }
        self
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Validation | ErrorKind::Io => 1,
            ErrorKind::Resource | ErrorKind::Convergence => 2,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{p}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for CliError {}

impl From<qreal::Error> for CliError {
    fn from(e: qreal::Error) -> Self {
        let kind = match e {
            qreal::Error::ResourceLimit { .. } => ErrorKind::Resource,
            qreal::Error::Convergence(_) => ErrorKind::Convergence,
            _ => ErrorKind::Validation,
        };
        Self { kind, message: e.to_string(), path: None }
    }
}

pub type CliResult<T> = Result<T, CliError>;
