//! Calibration questionnaire construction and personalized models.

mod forest;
mod matrix;
mod pca;
mod personal;
mod profile;
mod vcq;

use thiserror::Error;

pub use forest::{fit_forest, Forest, ForestConfig, ForestError, Tree};
pub use matrix::{demean_rows, DenseMatrix, RowKey};
pub use pca::{pca, EigenraterBasis};
pub use personal::{
    feature_names, predict_personal, select_training_posts, train_personal_models, PersonalConfig,
    PersonalModelSet, PersonalPrediction, BUNDLE_MAGIC,
};
pub use profile::RaterProfile;
pub use vcq::{question_for, select_vcq, Vcq, VcqItem, DEFAULT_VCQ_TOML, VCQ_LEN};

use crate::io::IoError;
use crate::value_system::ValueId;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("bad matrix shape: {0}")]
    Shape(String),
    #[error("pre-study matrix is missing `{post}` rated by `{rater}`")]
    MissingCell { post: String, rater: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("matrix has no variance to calibrate on")]
    Degenerate,
    #[error("{rows} rows cannot supply {k} distinct items")]
    TooFewRows { rows: usize, k: usize },
    #[error("{components} components cannot supply {k} items")]
    TooFewComponents { components: usize, k: usize },
    #[error("duplicate item ({post}, {value})")]
    DuplicateItem { post: String, value: ValueId },
    #[error("config: {0}")]
    Config(String),
    #[error("profile `{rater}` has {got} calibration answers, expected {expected}")]
    IncompleteProfile {
        rater: String,
        expected: usize,
        got: usize,
    },
    #[error("no consensus prediction for post `{0}`")]
    MissingPrediction(String),
    #[error("no profile for rater `{0}`")]
    MissingProfile(String),
    #[error("empty training set for `{0}`")]
    EmptyTraining(ValueId),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("model bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Io(#[from] IoError),
}
