use std::fmt;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum ServiceError {
    /// Malformed request or a judgment that violates the tuple rules.
    Validation(String),
    NotFound(String),
    Conflict(String),
    Io(String),
    Core(emotrans_core::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::Validation(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Core(e) if e.is_io() => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Core(_) => StatusCode::BAD_REQUEST,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Validation(_) => "validation",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Io(_) => "io",
            ServiceError::Core(e) if e.is_io() => "io",
            ServiceError::Core(_) => "precondition",
        }
    }
}

impl fmt::Display for ServiceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServiceError::Validation(m) | ServiceError::NotFound(m) | ServiceError::Conflict(m) | ServiceError::Io(m) => {
                f.write_str(m)
            }
            ServiceError::Core(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for ServiceError {}

impl From<emotrans_core::Error> for ServiceError {
    fn from(e: emotrans_core::Error) -> Self {
        ServiceError::Core(e)
    }
}

/// JSON error body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}
