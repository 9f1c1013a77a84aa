//! Annotation study service: screening, branching rating of assigned posts,
//! calibration questionnaire and demographics, with an append-only event log.

pub mod api;
mod error;
pub mod fixtures;
pub mod state;
mod study;

pub use api::{router, serve, Shared};
pub use error::{ErrorBody, ServiceError};
pub use fixtures::{Fixtures, GatingItem, TrainingItem};
pub use state::{AssignmentMode, Event, Phase, RatingSubmission, Session, StudyState, GATING_PASS};
pub use study::{Export, NextStep, ServiceConfig, Study, EVENTS_FILE};
