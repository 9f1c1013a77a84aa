use serde_json::json;

use valuelens::calibration::CalibrationError;
use valuelens::consensus::ConsensusError;
use valuelens::evaluation::EvalError;
use valuelens::io::IoError;
use valuelens::llm::{BackendError, BatchError, FinetuneError};
use valuelens::simulation::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad input, config or contract violation.
    Validation,
    /// Model backend or transport failure.
    Backend,
    /// Invariant violation or failed write.
    Internal,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Validation => 2,
            Kind::Backend => 3,
            Kind::Internal => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: Kind,
    pub code: &'static str,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Validation,
            code,
            message: message.into(),
        }
    }

    pub fn internal(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Internal,
            code,
            message: message.into(),
        }
    }

    pub fn backend(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Backend,
            code,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        json!({"error": {"code": self.code, "message": self.message, "exit_code": self.kind.exit_code()}}).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

/// Input-side IO failures are validation errors; writes go through
/// [`write_error`].
impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        let code = match e {
            IoError::Io { .. } => "unreadable_input",
            IoError::Parse { .. } => "malformed_input",
        };
        CliError::validation(code, e.to_string())
    }
}

pub fn write_error(e: IoError) -> CliError {
    CliError::internal("write_failed", e.to_string())
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let code = match e {
            EvalError::NoEvaluablePosts => "no_evaluable_posts",
            EvalError::MissingPredictions(_) => "missing_predictions",
            EvalError::InvalidArgument(_) => "invalid_argument",
            EvalError::Consensus(_) => "invalid_records",
            EvalError::Regression(_) => "regression_failed",
        };
        CliError::validation(code, e.to_string())
    }
}

impl From<ConsensusError> for CliError {
    fn from(e: ConsensusError) -> Self {
        CliError::validation("invalid_records", e.to_string())
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Io(io) => write_error(io),
            CalibrationError::Forest(f) => CliError::validation("forest_failed", f.to_string()),
            other => CliError::validation("calibration_failed", other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::validation("invalid_simulation", e.to_string())
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(m) => CliError::validation("backend_config", m),
            BackendError::Auth(m) => CliError::backend("backend_auth", m),
            other => CliError::backend("backend_failed", other.to_string()),
        }
    }
}

impl From<BatchError> for CliError {
    fn from(e: BatchError) -> Self {
        match e {
            BatchError::Auth(m) => CliError::backend("backend_auth", m),
            BatchError::Backend(b) => b.into(),
        }
    }
}

impl From<FinetuneError> for CliError {
    fn from(e: FinetuneError) -> Self {
        match e {
            FinetuneError::MissingLabel(_) => CliError::validation("missing_label", e.to_string()),
            FinetuneError::Io(io) => write_error(io),
        }
    }
}
