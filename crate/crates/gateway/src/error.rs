//! JSON error bodies: `{"error": <kind>, "reason": <message>}`.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorBody {
    pub error: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &str, reason: impl ToString) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.to_owned(),
                reason: reason.to_string(),
            },
        }
    }

    pub fn bad_request(error: &str, reason: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error, reason)
    }

    pub fn not_found(error: &str, reason: impl ToString) -> Self {
        Self::new(StatusCode::NOT_FOUND, error, reason)
    }

    pub fn unauthenticated() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "unauthenticated",
            "a valid bearer token is required",
        )
    }

    pub fn unknown_service(id: &str) -> Self {
        Self::not_found("unknown_service", format!("unknown service {id:?}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
