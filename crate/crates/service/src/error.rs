use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown study {0:?}")]
    UnknownStudy(String),

    #[error("unknown session {0:?}")]
    UnknownSession(String),

    #[error("study {0:?} has no unassigned participant slots")]
    NoSlots(String),

    /// The submitted item is not the session's current item, or the session is closed.
    #[error("{0}")]
    Conflict(String),

    #[error("{0}")]
    Unprocessable(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("event log line {line}: {message}")]
    CorruptLog { line: usize, message: String },

    #[error("study definition: {0}")]
    Study(String),

    #[error(transparent)]
    Core(#[from] noncomp_core::Error),
}

impl ServiceError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ServiceError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownStudy(_) | ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::NoSlots(_) | ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}
