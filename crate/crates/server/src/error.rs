use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use examlab_core::Error;

/// HTTP status for a core error tag. Total over [`examlab_core::error::ALL_TAGS`].
pub fn status_for(tag: &str) -> Option<StatusCode> {
    Some(match tag {
        "parse_error" | "invalid_email" | "invalid_answer" | "invalid_config"
        | "unknown_provider" | "invalid_request" => StatusCode::BAD_REQUEST,
        "forbidden" => StatusCode::FORBIDDEN,
        "not_found" => StatusCode::NOT_FOUND,
        "conflict" | "version_conflict" | "not_submitted" | "duplicate_provider"
        | "run_mismatch" => StatusCode::CONFLICT,
        "session_closed" => StatusCode::GONE,
        "validation_error" | "kind_mismatch" | "empty_intersection" => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        "rate_budget_exhausted" => StatusCode::TOO_MANY_REQUESTS,
        "unparseable_output" | "provider_error" => StatusCode::BAD_GATEWAY,
        "assessment_unavailable" => StatusCode::SERVICE_UNAVAILABLE,
        "store_error" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            error,
            message: message.into(),
            details: Vec::new(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    pub fn unauthorized() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "admin token required",
        )
    }

    pub fn internal() -> Self {
        Self::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "store_error",
            "internal error",
        )
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let tag = e.tag();
        let status = status_for(tag).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() && tag == "store_error" {
            // Store messages can carry filesystem paths.
            log::error!("{e}");
            return Self::internal();
        }
        Self {
            status,
            error: tag,
            message: e.to_string(),
            details: e.details(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}
