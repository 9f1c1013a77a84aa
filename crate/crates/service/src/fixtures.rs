//! Static screening material. The shipped files are stand-ins: the study's
//! own training and gating posts were never published.

use serde::{Deserialize, Serialize};
use valuelens::calibration::Vcq;
use valuelens::ValueId;

const ATTENTION_JSON: &str = include_str!("../fixtures/attention.json");
const TRAINING_JSON: &str = include_str!("../fixtures/training.json");
const GATING_JSON: &str = include_str!("../fixtures/gating.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberCheck {
    pub prompt: String,
    pub image_alt: String,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectCheck {
    pub prompt: String,
    pub options: Vec<String>,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionChecks {
    #[serde(default)]
    pub stand_in: bool,
    pub number: NumberCheck,
    pub select: SelectCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingItem {
    pub post_id: String,
    pub text: String,
    pub question: String,
    pub options: Vec<String>,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingItem {
    pub post_id: String,
    pub text: String,
    pub value: ValueId,
    /// Whether the post expresses `value`.
    pub expected: bool,
}

#[derive(Debug, Deserialize)]
struct ItemsFile<T> {
    #[serde(default)]
    stand_in: bool,
    items: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixtures {
    pub attention: AttentionChecks,
    pub training: Vec<TrainingItem>,
    pub gating: Vec<GatingItem>,
    pub vcq: Vcq,
    /// True when any part is replacement material.
    pub stand_in: bool,
}

impl Fixtures {
    pub fn from_json(
        attention: &str,
        training: &str,
        gating: &str,
        vcq: Vcq,
    ) -> Result<Self, String> {
        let attention: AttentionChecks =
            serde_json::from_str(attention).map_err(|e| format!("attention: {e}"))?;
        let training: ItemsFile<TrainingItem> =
            serde_json::from_str(training).map_err(|e| format!("training: {e}"))?;
        let gating: ItemsFile<GatingItem> =
            serde_json::from_str(gating).map_err(|e| format!("gating: {e}"))?;
        if training.items.is_empty() {
            return Err("training: no items".into());
        }
        if let Some(bad) = training
            .items
            .iter()
            .find(|t| !t.options.contains(&t.answer))
        {
            return Err(format!(
                "training item `{}`: answer is not an option",
                bad.post_id
            ));
        }
        if gating.items.len() != 4 {
            return Err(format!(
                "gating: expected 4 items, got {}",
                gating.items.len()
            ));
        }
        Ok(Fixtures {
            stand_in: attention.stand_in || training.stand_in || gating.stand_in,
            attention,
            training: training.items,
            gating: gating.items,
            vcq,
        })
    }

    /// Loads `attention.json`, `training.json` and `gating.json` from a directory.
    pub fn from_dir(dir: &std::path::Path, vcq: Vcq) -> Result<Self, String> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| format!("{}: {e}", dir.join(name).display()))
        };
        Fixtures::from_json(
            &read("attention.json")?,
            &read("training.json")?,
            &read("gating.json")?,
            vcq,
        )
    }
}

impl Default for Fixtures {
    fn default() -> Self {
        Fixtures::from_json(ATTENTION_JSON, TRAINING_JSON, GATING_JSON, Vcq::default())
            .expect("shipped fixtures are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_fixtures_are_marked() {
        let f = Fixtures::default();
        assert!(f.stand_in);
        assert_eq!(f.training.len(), 4);
        assert_eq!(f.gating.len(), 4);
        assert!(f
            .gating
            .iter()
            .all(|g| matches!(g.value, ValueId::SelfDirectedActions | ValueId::Face)));
        assert_eq!(f.attention.number.expected, "15");
        assert_eq!(f.attention.select.expected, "Somewhat disagree");
        assert_eq!(f.vcq.len(), 25);
    }
}
