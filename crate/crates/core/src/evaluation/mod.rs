//! Agreement metrics, MAE tables and regressions.

mod agreement;
mod mae;
mod regression;
mod report;
mod spearman;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use agreement::{
    crowd_curve, human_crowd, human_human, model_agreement, AgreementOptions, AgreementReport,
    Correlation, CrowdPoint, PostRho, Predictions,
};
pub use mae::{loo_mae, mae_human_crowd, mae_model_crowd, mae_table, MaeRow, MaeTable, MeanSe};
pub use regression::{
    heterogeneity_regression, ols, personal_value_column, Coefficient, HeterogeneityTable, OlsFit,
    RegressionError,
};
pub use report::{
    evaluate, relative_change, ConditionRow, EvaluationInputs, EvaluationReport, CONDITIONS,
    DEFAULT_CROWD_SIZES,
};
pub use spearman::{fractional_ranks, pearson, spearman, LengthMismatch};

use crate::consensus::ConsensusError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no evaluable posts")]
    NoEvaluablePosts,
    #[error("missing predictions for: {}", .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// Held-out share of posts used for model evaluation.
pub const HOLDOUT_FRACTION: f64 = 0.282;

/// Seeded post-level split into (train, holdout).
pub fn holdout_split<'a>(
    post_ids: impl IntoIterator<Item = &'a str>,
    fraction: f64,
    seed: u64,
) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut ids: Vec<&str> = post_ids
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_hold = ((ids.len() as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
    let hold = ids[..n_hold].iter().map(|s| s.to_string()).collect();
    let train = ids[n_hold..].iter().map(|s| s.to_string()).collect();
    (train, hold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_partitions() {
        let ids: Vec<String> = (0..100).map(|i| format!("p{i}")).collect();
        let (a, b) = holdout_split(ids.iter().map(String::as_str), HOLDOUT_FRACTION, 3);
        assert_eq!(b.len(), 28);
        assert_eq!(a.len() + b.len(), 100);
        assert!(a.is_disjoint(&b));
        let again = holdout_split(ids.iter().map(String::as_str), HOLDOUT_FRACTION, 3);
        assert_eq!((a, b), again);
    }
}
