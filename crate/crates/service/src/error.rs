use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use edgeguard_core::Error as CoreError;
use serde::{Deserialize, Serialize};

/// Machine-readable error codes shared by both backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    AlreadyRunning,
    NotRunning,
    BadSource,
    UnsupportedFormat,
    MalformedReplay,
    BadRequest,
    NotFound,
    PayloadTooLarge,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::AlreadyRunning | ErrorCode::NotRunning => StatusCode::CONFLICT,
            ErrorCode::BadSource | ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::UnsupportedFormat => StatusCode::UNSUPPORTED_MEDIA_TYPE,
            ErrorCode::MalformedReplay => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::PayloadTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Error body: `{"error": CODE, "message": ..., "line": n?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { error: code, message: message.into(), line: None }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }

    /// Maps a core error raised while opening or validating a source.
    pub fn from_source(e: CoreError) -> Self {
        match e {
            CoreError::MalformedReplay { line, message } => ApiError {
                error: ErrorCode::MalformedReplay,
                message: format!("line {line}: {message}"),
                line: Some(line),
            },
            CoreError::UnsupportedFormat(m) => Self::new(ErrorCode::UnsupportedFormat, m),
            CoreError::BadSource(_) | CoreError::UnsupportedSource(_) | CoreError::Io { .. } => {
                Self::new(ErrorCode::BadSource, e.to_string())
            }
            CoreError::Config(_) => Self::bad_request(e.to_string()),
            other => Self::internal(other.to_string()),
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.error, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.error.status(), Json(self)).into_response()
    }
}
