use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::value_system::{LikertRating, NUM_VALUES};

/// A rater's calibration answers plus optional background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterProfile {
    pub rater_id: String,
    /// Answers in VCQ order.
    pub vcq: Vec<LikertRating>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub demographics: BTreeMap<String, String>,
    /// The rater's own value scores, canonical value order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub personal_values: Option<[f64; NUM_VALUES]>,
}

impl RaterProfile {
    pub fn new(rater_id: impl Into<String>, vcq: Vec<LikertRating>) -> Self {
        RaterProfile {
            rater_id: rater_id.into(),
            vcq,
            demographics: BTreeMap::new(),
            personal_values: None,
        }
    }

    pub fn check(&self, expected_len: usize) -> Result<(), CalibrationError> {
        if self.vcq.len() != expected_len {
            return Err(CalibrationError::IncompleteProfile {
                rater: self.rater_id.clone(),
                expected: expected_len,
                got: self.vcq.len(),
            });
        }
        Ok(())
    }

    pub fn age(&self) -> Option<f64> {
        self.demographics
            .get("age")
            .and_then(|a| a.trim().parse().ok())
    }

    pub fn partisanship(&self) -> Option<&str> {
        self.demographics.get("partisanship").map(String::as_str)
    }
}
