//! The nineteen low-level values, Likert ratings, and the rating vector
//! every other module speaks in.

mod tree;

pub use tree::{complete_vector, TreeError, TreeNode, ValueTree, DEFAULT_TREE_TOML};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of low-level values.
pub const NUM_VALUES: usize = 19;

/// Highest point on the 0–6 rating scale.
pub const LIKERT_MAX: u8 = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValueError {
    #[error("rating {0} is outside the Likert scale [0, 6]")]
    OutOfRange(i64),
    #[error("unknown value id `{0}`")]
    UnknownValue(String),
    #[error("expected {expected} ratings, got {got}")]
    Length { expected: usize, got: usize },
}

/// One of the nineteen low-level values, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueId {
    SelfDirectedThoughts,
    SelfDirectedActions,
    Stimulation,
    Hedonism,
    Achievement,
    Dominance,
    Resources,
    Face,
    PersonalSecurity,
    SocietalSecurity,
    Tradition,
    RuleConformity,
    InterpersonalConformity,
    Humility,
    Dependability,
    Caring,
    UniversalConcern,
    PreservationOfNature,
    Tolerance,
}

impl ValueId {
    pub const ALL: [ValueId; NUM_VALUES] = [
        ValueId::SelfDirectedThoughts,
        ValueId::SelfDirectedActions,
        ValueId::Stimulation,
        ValueId::Hedonism,
        ValueId::Achievement,
        ValueId::Dominance,
        ValueId::Resources,
        ValueId::Face,
        ValueId::PersonalSecurity,
        ValueId::SocietalSecurity,
        ValueId::Tradition,
        ValueId::RuleConformity,
        ValueId::InterpersonalConformity,
        ValueId::Humility,
        ValueId::Dependability,
        ValueId::Caring,
        ValueId::UniversalConcern,
        ValueId::PreservationOfNature,
        ValueId::Tolerance,
    ];

    /// Position in the canonical order, which is also the `ValueVector` index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ValueId> {
        Self::ALL.get(i).copied()
    }

    /// Snake-case identifier used in files and on the wire.
    pub fn key(self) -> &'static str {
        self.info().0
    }

    pub fn display_name(self) -> &'static str {
        self.info().1
    }

    /// One-line definition as used in the value-rating prompt.
    pub fn description(self) -> &'static str {
        self.info().2
    }

    /// Concept key the value-rating prompt asks the model to emit.
    pub fn prompt_key(self) -> &'static str {
        self.info().3
    }

    pub fn from_prompt_key(key: &str) -> Option<ValueId> {
        Self::ALL.iter().copied().find(|v| v.prompt_key() == key)
    }

    fn info(self) -> (&'static str, &'static str, &'static str, &'static str) {
        use ValueId::*;
        match self {
            SelfDirectedThoughts => (
                "self_directed_thoughts",
                "Self-directed thoughts",
                "Freedom to cultivate one's own ideas and abilities",
                "SELF_DIRECTED_THOUGHTS_SCHWARTZ",
            ),
            SelfDirectedActions => (
                "self_directed_actions",
                "Self-directed actions",
                "Freedom to determine one's own actions",
                "SELF_DIRECTED_ACTIONS_SCHWARTZ",
            ),
            Stimulation => (
                "stimulation",
                "Stimulation",
                "Excitement, novelty, and change",
                "STIMULATION_SCHWARTZ",
            ),
            Hedonism => (
                "hedonism",
                "Hedonism",
                "Pleasure and sensuous gratification",
                "HEDONISM_SCHWARTZ",
            ),
            Achievement => (
                "achievement",
                "Achievement",
                "Success according to social standards",
                "ACHIEVEMENT_SCHWARTZ",
            ),
            Dominance => (
                "dominance",
                "Dominance",
                "Power through exercising control over people",
                "DOMINANCE_SCHWARTZ",
            ),
            Resources => (
                "resources",
                "Resources",
                "Power through control of material and social resources",
                "RESOURCES_SCHWARTZ",
            ),
            Face => (
                "face",
                "Face",
                "Security and power through maintaining one's public image and avoiding humiliation",
                "FACE_SCHWARTZ",
            ),
            PersonalSecurity => (
                "personal_security",
                "Personal security",
                "Safety in one's immediate environment",
                "PERSONAL_SECURITY_SCHWARTZ",
            ),
            SocietalSecurity => (
                "societal_security",
                "Societal security",
                "Safety and stability in the wider society",
                "SOCIETAL_SECURITY_SCHWARTZ",
            ),
            Tradition => (
                "tradition",
                "Tradition",
                "Maintaining and preserving cultural, family, or religious traditions",
                "TRADITION_SCHWARTZ",
            ),
            RuleConformity => (
                "rule_conformity",
                "Rule conformity",
                "Compliance with rules, laws, and formal obligations",
                "RULES_CONFORMITY_SCHWARTZ",
            ),
            InterpersonalConformity => (
                "interpersonal_conformity",
                "Interpersonal conformity",
                "Avoidance of upsetting or harming other people",
                "INTERPERSONAL_CONFORMITY_SCHWARTZ",
            ),
            Humility => (
                "humility",
                "Humility",
                "Recognizing one's insignificance in the larger scheme of things",
                "HUMILITY_SCHWARTZ",
            ),
            Dependability => (
                "dependability",
                "Dependability",
                "Being a reliable and trustworthy member of the ingroup",
                "DEPENDABILITY_SCHWARTZ",
            ),
            Caring => (
                "caring",
                "Caring",
                "Devotion to the welfare of ingroup members",
                "CARING_SCHWARTZ",
            ),
            UniversalConcern => (
                "universal_concern",
                "Universal concern",
                "Commitment to equality, justice, and protection for all people",
                "UNIVERSAL_CONCERN_SCHWARTZ",
            ),
            PreservationOfNature => (
                "preservation_of_nature",
                "Preservation of nature",
                "Preservation of the natural environment",
                "PRESERVATION_OF_NATURE_SCHWARTZ",
            ),
            Tolerance => (
                "tolerance",
                "Tolerance",
                "Acceptance and understanding of those who are different from oneself",
                "TOLERANCE_SCHWARTZ",
            ),
        }
    }
}

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ValueId {
    type Err = ValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.key() == s)
            .ok_or_else(|| ValueError::UnknownValue(s.to_string()))
    }
}

/// An integer rating on the 0–6 scale. Out-of-range values cannot be built.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(try_from = "i64", into = "u8")]
pub struct LikertRating(u8);

impl LikertRating {
    pub const ZERO: LikertRating = LikertRating(0);
    pub const MAX: LikertRating = LikertRating(LIKERT_MAX);

    pub fn new(v: u8) -> Result<Self, ValueError> {
        if v <= LIKERT_MAX {
            Ok(LikertRating(v))
        } else {
            Err(ValueError::OutOfRange(v as i64))
        }
    }

    /// Clamps to [0, 6] after rounding half up.
    pub fn from_real(x: f64) -> Self {
        let r = crate::rounding::round_half_up(x.clamp(0.0, LIKERT_MAX as f64));
        LikertRating(r as u8)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

impl TryFrom<i64> for LikertRating {
    type Error = ValueError;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        if (0..=LIKERT_MAX as i64).contains(&v) {
            Ok(LikertRating(v as u8))
        } else {
            Err(ValueError::OutOfRange(v))
        }
    }
}

impl From<LikertRating> for u8 {
    fn from(r: LikertRating) -> u8 {
        r.0
    }
}

impl fmt::Display for LikertRating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Nineteen ratings in canonical `ValueId` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<LikertRating>", into = "Vec<LikertRating>")]
pub struct ValueVector([LikertRating; NUM_VALUES]);

impl ValueVector {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn new(ratings: [LikertRating; NUM_VALUES]) -> Self {
        ValueVector(ratings)
    }

    pub fn from_u8(ratings: &[u8]) -> Result<Self, ValueError> {
        if ratings.len() != NUM_VALUES {
            return Err(ValueError::Length {
                expected: NUM_VALUES,
                got: ratings.len(),
            });
        }
        let mut out = [LikertRating::ZERO; NUM_VALUES];
        for (slot, &r) in out.iter_mut().zip(ratings) {
            *slot = LikertRating::new(r)?;
        }
        Ok(ValueVector(out))
    }

    /// Rounds (half up) and clamps each real into the scale.
    pub fn from_reals(xs: &[f64; NUM_VALUES]) -> Self {
        let mut out = [LikertRating::ZERO; NUM_VALUES];
        for (slot, &x) in out.iter_mut().zip(xs) {
            *slot = LikertRating::from_real(x);
        }
        ValueVector(out)
    }

    pub fn get(&self, v: ValueId) -> LikertRating {
        self.0[v.index()]
    }

    pub fn set(&mut self, v: ValueId, r: LikertRating) {
        self.0[v.index()] = r;
    }

    pub fn ratings(&self) -> &[LikertRating; NUM_VALUES] {
        &self.0
    }

    pub fn to_f64(&self) -> [f64; NUM_VALUES] {
        let mut out = [0.0; NUM_VALUES];
        for (o, r) in out.iter_mut().zip(self.0.iter()) {
            *o = r.as_f64();
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (ValueId, LikertRating)> + '_ {
        ValueId::ALL.iter().copied().zip(self.0.iter().copied())
    }
}

impl TryFrom<Vec<LikertRating>> for ValueVector {
    type Error = ValueError;

    fn try_from(v: Vec<LikertRating>) -> Result<Self, Self::Error> {
        let got = v.len();
        let arr: [LikertRating; NUM_VALUES] = v.try_into().map_err(|_| ValueError::Length {
            expected: NUM_VALUES,
            got,
        })?;
        Ok(ValueVector(arr))
    }
}

impl From<ValueVector> for Vec<LikertRating> {
    fn from(v: ValueVector) -> Self {
        v.0.to_vec()
    }
}
