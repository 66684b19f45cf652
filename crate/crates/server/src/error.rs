use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use precompose_core::composer::{ComposeError, ExecuteError};
use precompose_core::merger::MergeError;
use precompose_core::ontology::OntologyError;
use precompose_core::registry::RegistryError;
use serde::Serialize;
use serde_json::Value;

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

/// HTTP status for each error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "UNKNOWN_USER" => StatusCode::UNAUTHORIZED,
        "UNKNOWN_SERVICE" | "UNKNOWN_ONTOLOGY" | "UNKNOWN_SESSION" | "UNKNOWN_SUGGESTION"
        | "NO_COMPOSITION" | "NOT_FOUND" => StatusCode::NOT_FOUND,
        "DUPLICATE_NAME" | "SESSION_FINALIZED" | "PENDING_REMAIN" | "NAME_COLLISION" => StatusCode::CONFLICT,
        "INVALID_DECISION" | "INCOMPATIBLE_ATTRIBUTES" | "CYCLE" | "MISSING_PROPERTY"
        | "NOT_DATA_PROPERTY" | "UNKNOWN_CLASS" => StatusCode::UNPROCESSABLE_ENTITY,
        "INVALID_REQUEST" => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        ApiError { status: status_for(code), code: code.to_string(), message: message.into(), detail: None }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        ApiError::new("INVALID_REQUEST", message)
    }

    /// Client-supplied ontology that failed to parse or validate.
    pub fn bad_ontology(e: OntologyError) -> Self {
        ApiError::invalid(e.to_string()).with_detail(serde_json::json!({ "cause": e.code() }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl From<ComposeError> for ApiError {
    fn from(e: ComposeError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl From<ExecuteError> for ApiError {
    fn from(e: ExecuteError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl From<MergeError> for ApiError {
    fn from(e: MergeError) -> Self {
        let err = ApiError::new(e.code(), e.to_string());
        match e {
            MergeError::PendingRemain(ids) => err.with_detail(serde_json::json!({ "pending": ids })),
            _ => err,
        }
    }
}
