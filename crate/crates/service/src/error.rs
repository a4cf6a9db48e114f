use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("unknown scenario binding {0:?}")]
    UnknownScenario(String),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("session {0:?} has ended")]
    SessionEnded(String),
    #[error("malformed event: {0}")]
    MalformedEvent(String),
    #[error("service unavailable: {0}")]
    Unavailable(String),
}

/// Error body: `{"error": "<code>", "message": "..."}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownScenario(_) => "unknown_scenario",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::SessionEnded(_) => "session_ended",
            ServiceError::MalformedEvent(_) => "malformed_event",
            ServiceError::Unavailable(_) => "unavailable",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownScenario(_) | ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::SessionEnded(_) => StatusCode::CONFLICT,
            ServiceError::MalformedEvent(_) => StatusCode::BAD_REQUEST,
            ServiceError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: self.code().to_owned(), message: self.to_string() };
        (self.status(), Json(body)).into_response()
    }
}
