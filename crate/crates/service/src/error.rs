use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// Reasons the server cannot start.
#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("invalid value {value:?} for {key}")]
    Config { key: String, value: String },

    #[error("no model configured: set GAITWORKS_MODEL_GEI and/or GAITWORKS_MODEL_SEI")]
    NoModel,

    #[error("cannot load {kind} model from {}: {source}", path.display())]
    Model {
        kind: &'static str,
        path: PathBuf,
        #[source]
        source: gaitworks_core::Error,
    },

    #[error("model {} holds a {found} network but was configured as {expected}", path.display())]
    ModelKind {
        path: PathBuf,
        expected: &'static str,
        found: &'static str,
    },

    #[error("session directory {}: {source}", path.display())]
    SessionDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid SMTP url: {0}")]
    Smtp(String),

    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error("server error: {0}")]
    Serve(#[source] std::io::Error),
}

/// An HTTP error rendered as `{"error": {"code", "message"}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::bad_request("malformed_payload", message)
    }

    pub fn session_not_found() -> Self {
        Self::new(StatusCode::NOT_FOUND, "session_not_found", "unknown or expired session")
    }

    pub fn unsupported(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_media_type", message)
    }

    pub fn too_large(limit_bytes: usize) -> Self {
        Self::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
            format!(
                "upload exceeds the {:.1} MB limit",
                limit_bytes as f64 / (1024.0 * 1024.0)
            ),
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.status.as_u16(), self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

/// Core errors raised while processing an upload are the client's fault
/// unless they concern I/O on the server side.
impl From<gaitworks_core::Error> for ApiError {
    fn from(e: gaitworks_core::Error) -> Self {
        use gaitworks_core::Error as E;
        match e {
            E::Io { .. } | E::MissingCache(_) | E::Diverged { .. } | E::ModelFormat(_) => {
                ApiError::internal(e.to_string())
            }
            E::NoUsableSpan => ApiError::bad_request("no_gait_cycle", e.to_string()),
            other => ApiError::malformed(other.to_string()),
        }
    }
}
