use std::path::Path;

use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Internal,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Internal => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Internal => "internal",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: Kind::Usage, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { kind: Kind::Data, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { kind: Kind::Internal, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::data(format!("{}: {e}", path.display()))
    }

    /// Attaches a file path to a core error unless the error already names one.
    pub fn at(path: &Path, e: gaitworks_core::Error) -> Self {
        match e {
            gaitworks_core::Error::Io { .. } => e.into(),
            other => {
                let mut err = CliError::from(other);
                err.message = format!("{}: {}", path.display(), err.message);
                err
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "error": {
                "kind": self.kind.name(),
                "exit_code": self.kind.exit_code(),
                "message": self.message,
            }
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<gaitworks_core::Error> for CliError {
    fn from(e: gaitworks_core::Error) -> Self {
        use gaitworks_core::Error as E;
        match e {
            E::MissingCache(_) => CliError::internal(e.to_string()),
            E::Diverged { .. } => CliError::data(format!("{e}; try a lower learning rate")),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<gaitworks_service::StartupError> for CliError {
    fn from(e: gaitworks_service::StartupError) -> Self {
        use gaitworks_service::StartupError as S;
        match e {
            S::Serve(_) => CliError::internal(e.to_string()),
            S::Config { .. } | S::NoModel | S::Smtp(_) => CliError::usage(e.to_string()),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
