//! Measuring basic-human-value expressions in social media posts when
//! annotators disagree.

pub mod calibration;
pub mod consensus;
pub mod corpus;
pub mod evaluation;
pub mod io;
pub mod llm;
pub mod rounding;
pub mod simulation;
pub mod value_system;

pub use value_system::{LikertRating, ValueId, ValueTree, ValueVector, NUM_VALUES};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
