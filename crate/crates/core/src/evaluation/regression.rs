use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use super::EvalError;
use crate::calibration::RaterProfile;
use crate::consensus::AnnotationRecord;
use crate::value_system::{ValueId, NUM_VALUES};

/// Relative residual norm below which a column counts as collinear.
const COLLINEAR_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("design has {rows} rows but {cols} usable columns")]
    TooFewRows { rows: usize, cols: usize },
    #[error("row {0} has the wrong width")]
    Ragged(usize),
    #[error("design matrix is singular after dropping collinear columns")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub z: f64,
    /// Two-sided, normal approximation.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<Coefficient>,
    /// Columns removed as linear combinations of earlier ones.
    pub dropped: Vec<String>,
    pub n: usize,
    pub r_squared: f64,
}

impl OlsFit {
    pub fn get(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

fn two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return 1.0;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Ordinary least squares. Columns that are (numerically) linear
/// combinations of earlier columns are dropped in order, with a warning.
pub fn ols(rows: &[Vec<f64>], y: &[f64], names: &[String]) -> Result<OlsFit, RegressionError> {
    let p_all = names.len();
    if let Some(i) = rows.iter().position(|r| r.len() != p_all) {
        return Err(RegressionError::Ragged(i));
    }
    assert_eq!(rows.len(), y.len(), "one response per row");
    let n = rows.len();

    // Gram-Schmidt screen for collinearity
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..p_all {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let norm0 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut resid = col;
        for q in &basis {
            let dot: f64 = resid.iter().zip(q).map(|(a, b)| a * b).sum();
            resid.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = resid.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= COLLINEAR_TOL * norm0 {
            log::warn!("dropping collinear column `{}`", names[j]);
            dropped.push(names[j].clone());
            continue;
        }
        basis.push(resid.into_iter().map(|x| x / norm).collect());
        keep.push(j);
    }
    let p = keep.len();
    if n <= p {
        return Err(RegressionError::TooFewRows { rows: n, cols: p });
    }

    let x = DMatrix::from_fn(n, p, |i, k| rows[i][keep[k]]);
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let inv = xtx.try_inverse().ok_or(RegressionError::Singular)?;
    let beta = &inv * x.transpose() * &yv;
    let resid = &yv - &x * &beta;
    let rss = resid.norm_squared();
    let sigma2 = rss / (n - p) as f64;
    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };

    let coefficients = keep
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let estimate = beta[k];
            let stderr = (sigma2 * inv[(k, k)]).max(0.0).sqrt();
            let z = if stderr > 0.0 {
                estimate / stderr
            } else if estimate.abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY.copysign(estimate)
            };
            Coefficient {
                name: names[j].clone(),
                estimate,
                stderr,
                z,
                p_value: two_sided_p(z),
            }
        })
        .collect();
    Ok(OlsFit {
        coefficients,
        dropped,
        n,
        r_squared,
    })
}

/// One regression per value: that value's ratings on the rater's own value
/// scores, age and partisanship dummies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityTable {
    pub fits: Vec<(ValueId, OlsFit)>,
    /// Records whose rater had no usable profile.
    pub skipped_records: usize,
    /// Partisanship level absorbed into the intercept, if any.
    pub baseline_party: Option<String>,
}

pub fn personal_value_column(v: ValueId) -> String {
    format!("own_{}", v.key())
}

pub fn heterogeneity_regression(
    records: &[AnnotationRecord],
    profiles: &BTreeMap<String, RaterProfile>,
) -> Result<HeterogeneityTable, EvalError> {
    let usable: Vec<(&AnnotationRecord, &RaterProfile, &[f64; NUM_VALUES])> = records
        .iter()
        .filter_map(|r| {
            let p = profiles.get(&r.rater_id)?;
            Some((r, p, p.personal_values.as_ref()?))
        })
        .collect();
    let skipped = records.len() - usable.len();
    if usable.is_empty() {
        return Err(EvalError::NoEvaluablePosts);
    }

    // demographics are only used when every usable rater reports them
    let use_age = usable.iter().all(|(_, p, _)| p.age().is_some());
    let parties: BTreeSet<&str> = usable
        .iter()
        .filter_map(|(_, p, _)| p.partisanship())
        .collect();
    let use_party =
        !parties.is_empty() && usable.iter().all(|(_, p, _)| p.partisanship().is_some());
    if !use_age {
        log::warn!("age missing for some raters; omitted from the regression");
    }
    if !parties.is_empty() && !use_party {
        log::warn!("partisanship missing for some raters; omitted from the regression");
    }
    let levels: Vec<&str> = if use_party {
        parties.iter().copied().collect()
    } else {
        Vec::new()
    };

    let mut names = vec!["intercept".to_string()];
    names.extend(ValueId::ALL.iter().map(|v| personal_value_column(*v)));
    if use_age {
        names.push("age".into());
    }
    names.extend(levels.iter().skip(1).map(|l| format!("party_{l}")));

    let design: Vec<Vec<f64>> = usable
        .iter()
        .map(|(_, p, h)| {
            let mut row = vec![1.0];
            row.extend_from_slice(&h[..]);
            if use_age {
                row.push(p.age().expect("checked"));
            }
            let party = p.partisanship();
            row.extend(
                levels
                    .iter()
                    .skip(1)
                    .map(|l| f64::from(u8::from(party == Some(*l)))),
            );
            row
        })
        .collect();

    let mut fits = Vec::with_capacity(NUM_VALUES);
    for v in ValueId::ALL {
        let y: Vec<f64> = usable
            .iter()
            .map(|(r, _, _)| r.ratings.get(v).as_f64())
            .collect();
        fits.push((v, ols(&design, &y, &names)?));
    }
    Ok(HeterogeneityTable {
        fits,
        skipped_records: skipped,
        baseline_party: levels.first().map(|s| s.to_string()),
    })
}
