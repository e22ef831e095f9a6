use axum::http::StatusCode;
use bilateral_core::Error;
use serde_json::{json, Value};

use crate::session::{RevisionStatus, SessionState};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("session `{0}` not found")]
    UnknownSession(String),
    #[error("revision {0} not found")]
    UnknownRevision(usize),
    #[error("no route for {0}")]
    NoRoute(String),
    #[error("cannot {action} while the session is {state:?}")]
    IllegalTransition { action: &'static str, state: SessionState },
    #[error("revision {index} is {status:?}, not pending")]
    RevisionNotPending { index: usize, status: RevisionStatus },
    #[error("request body does not match the schema: {message}")]
    Schema { message: String, details: Value },
    #[error("idempotency key was already used for a different request")]
    KeyReused,
    #[error(transparent)]
    Domain(#[from] Error),
}

impl ApiError {
    pub fn schema(message: impl Into<String>, details: Value) -> ApiError {
        ApiError::Schema { message: message.into(), details }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownSession(_) | ApiError::UnknownRevision(_) | ApiError::NoRoute(_) => StatusCode::NOT_FOUND,
            ApiError::IllegalTransition { .. } | ApiError::RevisionNotPending { .. } => StatusCode::CONFLICT,
            ApiError::Schema { .. } | ApiError::KeyReused => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Domain(e) => match e {
                Error::NotFound(_) => StatusCode::NOT_FOUND,
                Error::Io(_) | Error::CorruptDocument { .. } | Error::MissingDir(_) | Error::Xml(_) => {
                    StatusCode::INTERNAL_SERVER_ERROR
                }
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            },
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::UnknownSession(_) => "unknown_session",
            ApiError::UnknownRevision(_) => "unknown_revision",
            ApiError::NoRoute(_) => "no_route",
            ApiError::IllegalTransition { .. } => "illegal_transition",
            ApiError::RevisionNotPending { .. } => "revision_not_pending",
            ApiError::Schema { .. } => "schema_violation",
            ApiError::KeyReused => "idempotency_key_reused",
            ApiError::Domain(e) => e.code(),
        }
    }

    pub fn details(&self) -> Value {
        match self {
            ApiError::IllegalTransition { action, state } => json!({ "action": action, "state": state }),
            ApiError::RevisionNotPending { index, status } => json!({ "index": index, "status": status }),
            ApiError::UnknownSession(id) => json!({ "session": id }),
            ApiError::UnknownRevision(n) => json!({ "index": n }),
            ApiError::Schema { details, .. } => details.clone(),
            ApiError::Domain(Error::InvalidTree(v)) => json!({ "violations": v }),
            ApiError::Domain(Error::RepoTooLarge { size, max }) => json!({ "size": size, "max": max }),
            ApiError::Domain(Error::SearchSpaceTooLarge { size, max }) => {
                json!({ "size": size.to_string(), "max": max.to_string() })
            }
            _ => Value::Null,
        }
    }

    /// `{"error": {"code", "message", "details"}}`.
    pub fn body(&self) -> Value {
        json!({ "error": { "code": self.code(), "message": self.to_string(), "details": self.details() } })
    }
}
