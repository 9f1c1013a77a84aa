use serde::Serialize;
use thiserror::Error;

use crate::state::Phase;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ServiceError {
    #[error("rater `{0}` already has an open session")]
    DuplicateOpenSession(String),
    #[error("rater `{0}` failed screening and cannot start again")]
    RaterRejected(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session is in phase {actual}, not {expected}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("training item {index} out of range (0..{len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("training item {index} is not the current item {current}")]
    WrongItem { index: usize, current: usize },
    #[error("leaf `{leaf}` rated under unexpanded parent `{parent}`")]
    LeafUnderUnexpandedParent { leaf: String, parent: String },
    #[error("missing rating for leaf `{leaf}` under expanded parent `{parent}`")]
    MissingLeaf { leaf: String, parent: String },
    #[error("missing rating for high-level value `{0}`")]
    MissingParent(String),
    #[error("unknown value or tree node `{0}`")]
    UnknownNode(String),
    #[error("post `{0}` is not assigned to this session")]
    UnassignedPost(String),
    #[error("post `{0}` was already rated in this session")]
    DuplicateSubmission(String),
    #[error("expected {expected} responses, got {got}")]
    IncompleteResponses { expected: usize, got: usize },
    #[error("rating {0} outside [0, 6]")]
    OutOfRange(i64),
    #[error("annotation pool has {pool} posts, sessions need {need}")]
    PoolTooSmall { pool: usize, need: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("storage failure: {0}")]
    Storage(String),
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::DuplicateOpenSession(_) => "duplicate_open_session",
            ServiceError::RaterRejected(_) => "rater_rejected",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::WrongPhase { .. } => "wrong_phase",
            ServiceError::IndexOutOfRange { .. } => "index_out_of_range",
            ServiceError::WrongItem { .. } => "wrong_item",
            ServiceError::LeafUnderUnexpandedParent { .. } => "leaf_under_unexpanded_parent",
            ServiceError::MissingLeaf { .. } => "missing_leaf",
            ServiceError::MissingParent(_) => "missing_parent",
            ServiceError::UnknownNode(_) => "unknown_node",
            ServiceError::UnassignedPost(_) => "unassigned_post",
            ServiceError::DuplicateSubmission(_) => "duplicate_submission",
            ServiceError::IncompleteResponses { .. } => "incomplete_responses",
            ServiceError::OutOfRange(_) => "out_of_range",
            ServiceError::PoolTooSmall { .. } => "pool_too_small",
            ServiceError::InvalidRequest(_) => "invalid_request",
            ServiceError::Storage(_) => "storage_error",
        }
    }

    /// Whether the payload was rejected for breaking the rating tree's rules.
    pub fn is_tree_inconsistency(&self) -> bool {
        matches!(
            self,
            ServiceError::LeafUnderUnexpandedParent { .. }
                | ServiceError::MissingLeaf { .. }
                | ServiceError::MissingParent(_)
        )
    }

    pub fn status(&self) -> u16 {
        match self {
            ServiceError::UnknownSession(_) => 404,
            ServiceError::DuplicateOpenSession(_)
            | ServiceError::RaterRejected(_)
            | ServiceError::WrongPhase { .. }
            | ServiceError::WrongItem { .. }
            | ServiceError::DuplicateSubmission(_) => 409,
            ServiceError::Storage(_) | ServiceError::PoolTooSmall { .. } => 500,
            _ => 422,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code(),
            message: self.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
}
