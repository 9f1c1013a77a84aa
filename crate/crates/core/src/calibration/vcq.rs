use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::pca::EigenraterBasis;
use super::CalibrationError;
use crate::value_system::ValueId;

pub const DEFAULT_VCQ_TOML: &str = include_str!("../../config/vcq.default.toml");
pub const VCQ_LEN: usize = 25;

pub fn question_for(value: ValueId) -> String {
    format!(
        "To what extent does this post reflect {}?",
        value.display_name().to_lowercase()
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcqItem {
    pub post_id: String,
    pub value: ValueId,
    pub question: String,
    /// Value wording shown to raters, when it differs from the canonical name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_text: Option<String>,
}

/// Value Calibration Questionnaire: ordered, distinct (post, value) items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vcq {
    pub version: u32,
    pub items: Vec<VcqItem>,
}

impl Vcq {
    pub fn new(items: Vec<VcqItem>) -> Result<Self, CalibrationError> {
        let mut seen = BTreeSet::new();
        for it in &items {
            if !seen.insert((it.post_id.as_str(), it.value)) {
                return Err(CalibrationError::DuplicateItem {
                    post: it.post_id.clone(),
                    value: it.value,
                });
            }
        }
        Ok(Vcq { version: 1, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn from_toml(text: &str) -> Result<Self, CalibrationError> {
        let raw: Vcq = toml::from_str(text).map_err(|e| CalibrationError::Config(e.to_string()))?;
        Vcq::new(raw.items)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("vcq serializes")
    }
}

impl Default for Vcq {
    /// The shipped 25-item questionnaire.
    fn default() -> Self {
        Vcq::from_toml(DEFAULT_VCQ_TOML).expect("shipped vcq is valid")
    }
}

/// For each of the first `k` components, the row with the largest |score|
/// not already taken; ties go to the lower row index.
pub fn select_vcq(basis: &EigenraterBasis, k: usize) -> Result<Vcq, CalibrationError> {
    let n = basis.rows.len();
    if n < k {
        return Err(CalibrationError::TooFewRows { rows: n, k });
    }
    if basis.components.len() < k {
        return Err(CalibrationError::TooFewComponents {
            components: basis.components.len(),
            k,
        });
    }
    let mut taken = vec![false; n];
    let mut items = Vec::with_capacity(k);
    for j in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in basis.scores.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let a = row[j].abs();
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i, a));
            }
        }
        let (i, _) = best.expect("n >= k leaves a free row");
        taken[i] = true;
        let key = &basis.rows[i];
        items.push(VcqItem {
            post_id: key.post_id.clone(),
            value: key.value,
            question: question_for(key.value),
            label: None,
            post_text: None,
        });
    }
    Vcq::new(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::RowKey;

    fn basis(scores: Vec<Vec<f64>>) -> EigenraterBasis {
        let n = scores.len();
        let m = scores[0].len();
        EigenraterBasis {
            raters: (0..m).map(|j| format!("r{j}")).collect(),
            rows: (0..n)
                .map(|i| RowKey {
                    post_id: format!("p{i}"),
                    value: ValueId::ALL[i % 19],
                })
                .collect(),
            components: vec![vec![0.0; m]; m],
            eigenvalues: vec![1.0; m],
            explained_ratio: vec![1.0 / m as f64; m],
            scores,
            column_means: vec![0.0; m],
        }
    }

    #[test]
    fn picks_largest_magnitude() {
        let b = basis(vec![vec![2.0], vec![-5.0], vec![1.0]]);
        let v = select_vcq(&b, 1).unwrap();
        assert_eq!(v.items[0].post_id, "p1");
    }

    #[test]
    fn duplicate_skips_to_next() {
        let b = basis(vec![vec![1.0, 0.5], vec![9.0, 8.0], vec![0.0, -7.0]]);
        let v = select_vcq(&b, 2).unwrap();
        assert_eq!(v.items[0].post_id, "p1");
        assert_eq!(v.items[1].post_id, "p2");
    }

    #[test]
    fn ties_to_lower_index() {
        let b = basis(vec![vec![3.0], vec![-3.0]]);
        assert_eq!(select_vcq(&b, 1).unwrap().items[0].post_id, "p0");
    }

    #[test]
    fn too_few_rows() {
        let b = basis(vec![vec![1.0, 1.0]]);
        assert!(matches!(
            select_vcq(&b, 2),
            Err(CalibrationError::TooFewRows { .. })
        ));
    }

    #[test]
    fn default_questionnaire() {
        let v = Vcq::default();
        assert_eq!(v.len(), VCQ_LEN);
        assert_eq!(v.items[6].value, ValueId::RuleConformity);
        assert_eq!(
            v.items[6]
                .label
                .as_deref()
                .map(|l| l.starts_with("Lawfulness")),
            Some(true)
        );
        assert_eq!(v.items[24].value, ValueId::Resources);
        assert_eq!(Vcq::from_toml(&v.to_toml()).unwrap(), v);
        assert!(v.items.iter().all(|i| i
            .question
            .starts_with("To what extent does this post reflect ")));
    }
}
