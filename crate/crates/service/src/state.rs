//! Event-sourced study state. Commands validate against the current state
//! and yield an [`Event`]; [`StudyState::apply`] is the only mutation and is
//! total, so replaying a log rebuilds the same state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use valuelens::calibration::RaterProfile;
use valuelens::consensus::AnnotationRecord;
use valuelens::value_system::complete_vector;
use valuelens::{LikertRating, ValueId, ValueTree};

use crate::error::ServiceError;
use crate::fixtures::Fixtures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Attention,
    Training,
    Gating,
    Main,
    Vcq,
    Demographics,
    Done,
    Rejected,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("phase serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

impl Phase {
    pub fn is_open(self) -> bool {
        !matches!(self, Phase::Done | Phase::Rejected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    /// Uniform without replacement within a session.
    #[default]
    Uniform,
    /// Least-assigned posts first, random among ties.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub rater_id: String,
    pub phase: Phase,
    pub assigned: Vec<String>,
    /// Post ids rated so far, in submission order.
    pub rated: Vec<String>,
    pub training_item: usize,
    pub training_retries: Vec<u32>,
    pub gating_score: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected_in: Option<Phase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    StudyOpened {
        seed: u64,
        pool_size: usize,
        posts_per_session: usize,
        training_items: usize,
    },
    SessionCreated {
        session_id: String,
        rater_id: String,
        assigned: Vec<String>,
    },
    AttentionChecked {
        session_id: String,
        number: String,
        selected: String,
        passed: bool,
    },
    TrainingAnswered {
        session_id: String,
        item: usize,
        answer: String,
        correct: bool,
    },
    GatingScored {
        session_id: String,
        answers: Vec<bool>,
        correct: usize,
        passed: bool,
    },
    RatingAccepted {
        session_id: String,
        record: AnnotationRecord,
    },
    VcqSubmitted {
        session_id: String,
        profile: RaterProfile,
    },
    DemographicsSubmitted {
        session_id: String,
        fields: BTreeMap<String, String>,
    },
}

/// Branching rating of one post: the four high-level values, plus leaf
/// ratings for exactly the expanded branches. Keys are tree node ids and
/// value keys.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub post_id: String,
    pub high: BTreeMap<String, i64>,
    #[serde(default)]
    pub leaves: BTreeMap<String, i64>,
}

/// Minimum number of correct gating answers.
pub const GATING_PASS: usize = 2;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StudyState {
    pub seed: u64,
    pub posts_per_session: usize,
    pub training_items: usize,
    pub sessions: BTreeMap<String, Session>,
    pub records: Vec<AnnotationRecord>,
    /// By rater id.
    pub profiles: BTreeMap<String, RaterProfile>,
    pub assignment_counts: BTreeMap<String, u32>,
    pub events_applied: u64,
}

fn rating(x: i64) -> Result<LikertRating, ServiceError> {
    LikertRating::try_from(x).map_err(|_| ServiceError::OutOfRange(x))
}

impl StudyState {
    pub fn session(&self, id: &str) -> Result<&Session, ServiceError> {
        self.sessions
            .get(id)
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn in_phase(&self, id: &str, expected: Phase) -> Result<&Session, ServiceError> {
        let s = self.session(id)?;
        if s.phase != expected {
            return Err(ServiceError::WrongPhase {
                expected,
                actual: s.phase,
            });
        }
        Ok(s)
    }

    pub fn next_session_id(&self) -> String {
        format!("s-{:06}", self.sessions.len() + 1)
    }

    pub fn open_session_of(&self, rater_id: &str) -> Option<&Session> {
        self.sessions
            .values()
            .find(|s| s.rater_id == rater_id && s.phase.is_open())
    }

    pub fn create_session(
        &self,
        rater_id: &str,
        pool: &[String],
        mode: AssignmentMode,
    ) -> Result<Event, ServiceError> {
        if rater_id.trim().is_empty() {
            return Err(ServiceError::InvalidRequest("rater_id is empty".into()));
        }
        if self.open_session_of(rater_id).is_some() {
            return Err(ServiceError::DuplicateOpenSession(rater_id.to_string()));
        }
        if self
            .sessions
            .values()
            .any(|s| s.rater_id == rater_id && s.phase == Phase::Rejected)
        {
            return Err(ServiceError::RaterRejected(rater_id.to_string()));
        }
        let need = self.posts_per_session;
        if pool.len() < need {
            return Err(ServiceError::PoolTooSmall {
                pool: pool.len(),
                need,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.sessions.len() as u64 + 1);
        let assigned: Vec<String> = match mode {
            AssignmentMode::Uniform => rand::seq::index::sample(&mut rng, pool.len(), need)
                .into_iter()
                .map(|i| pool[i].clone())
                .collect(),
            AssignmentMode::Balanced => {
                let mut order: Vec<&String> = pool.iter().collect();
                order.shuffle(&mut rng);
                order.sort_by_key(|p| self.assignment_counts.get(*p).copied().unwrap_or(0));
                order.into_iter().take(need).cloned().collect()
            }
        };
        Ok(Event::SessionCreated {
            session_id: self.next_session_id(),
            rater_id: rater_id.to_string(),
            assigned,
        })
    }

    pub fn submit_attention(
        &self,
        id: &str,
        number: &str,
        selected: &str,
        fx: &Fixtures,
    ) -> Result<Event, ServiceError> {
        self.in_phase(id, Phase::Attention)?;
        let passed = number.trim() == fx.attention.number.expected
            && selected == fx.attention.select.expected;
        Ok(Event::AttentionChecked {
            session_id: id.to_string(),
            number: number.to_string(),
            selected: selected.to_string(),
            passed,
        })
    }

    pub fn submit_training(
        &self,
        id: &str,
        item: usize,
        answer: &str,
        fx: &Fixtures,
    ) -> Result<Event, ServiceError> {
        let s = self.in_phase(id, Phase::Training)?;
        if item >= fx.training.len() {
            return Err(ServiceError::IndexOutOfRange {
                index: item,
                len: fx.training.len(),
            });
        }
        if item != s.training_item {
            return Err(ServiceError::WrongItem {
                index: item,
                current: s.training_item,
            });
        }
        Ok(Event::TrainingAnswered {
            session_id: id.to_string(),
            item,
            answer: answer.to_string(),
            correct: answer == fx.training[item].answer,
        })
    }

    /// `answers[i]`: whether the rater judged gating post `i` to express its value.
    pub fn score_gating(
        &self,
        id: &str,
        answers: &[bool],
        fx: &Fixtures,
    ) -> Result<Event, ServiceError> {
        self.in_phase(id, Phase::Gating)?;
        if answers.len() != fx.gating.len() {
            return Err(ServiceError::IncompleteResponses {
                expected: fx.gating.len(),
                got: answers.len(),
            });
        }
        let correct = answers
            .iter()
            .zip(&fx.gating)
            .filter(|(a, g)| **a == g.expected)
            .count();
        Ok(Event::GatingScored {
            session_id: id.to_string(),
            answers: answers.to_vec(),
            correct,
            passed: correct >= GATING_PASS,
        })
    }

    pub fn submit_rating(
        &self,
        id: &str,
        sub: &RatingSubmission,
        tree: &ValueTree,
        threshold: LikertRating,
    ) -> Result<Event, ServiceError> {
        let s = self.in_phase(id, Phase::Main)?;
        if !s.assigned.contains(&sub.post_id) {
            return Err(ServiceError::UnassignedPost(sub.post_id.clone()));
        }
        if s.rated.contains(&sub.post_id) {
            return Err(ServiceError::DuplicateSubmission(sub.post_id.clone()));
        }
        let record = validate_rating(sub, &s.rater_id, tree, threshold)?;
        Ok(Event::RatingAccepted {
            session_id: id.to_string(),
            record,
        })
    }

    pub fn submit_vcq(
        &self,
        id: &str,
        answers: &[i64],
        fx: &Fixtures,
    ) -> Result<Event, ServiceError> {
        let s = self.in_phase(id, Phase::Vcq)?;
        if answers.len() != fx.vcq.len() {
            return Err(ServiceError::IncompleteResponses {
                expected: fx.vcq.len(),
                got: answers.len(),
            });
        }
        let vcq = answers
            .iter()
            .map(|&a| rating(a))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Event::VcqSubmitted {
            session_id: id.to_string(),
            profile: RaterProfile::new(s.rater_id.clone(), vcq),
        })
    }

    pub fn submit_demographics(
        &self,
        id: &str,
        fields: &BTreeMap<String, String>,
    ) -> Result<Event, ServiceError> {
        self.in_phase(id, Phase::Demographics)?;
        Ok(Event::DemographicsSubmitted {
            session_id: id.to_string(),
            fields: fields.clone(),
        })
    }

    /// Applies one logged event. Events are trusted: they were validated
    /// when first produced.
    pub fn apply(&mut self, event: &Event) {
        self.events_applied += 1;
        match event {
            Event::StudyOpened {
                seed,
                posts_per_session,
                training_items,
                ..
            } => {
                self.seed = *seed;
                self.posts_per_session = *posts_per_session;
                self.training_items = *training_items;
            }
            Event::SessionCreated {
                session_id,
                rater_id,
                assigned,
            } => {
                for p in assigned {
                    *self.assignment_counts.entry(p.clone()).or_default() += 1;
                }
                self.sessions.insert(
                    session_id.clone(),
                    Session {
                        id: session_id.clone(),
                        rater_id: rater_id.clone(),
                        phase: Phase::Attention,
                        assigned: assigned.clone(),
                        rated: Vec::new(),
                        training_item: 0,
                        training_retries: vec![0; self.training_items],
                        gating_score: None,
                        rejected_in: None,
                    },
                );
            }
            Event::AttentionChecked {
                session_id, passed, ..
            } => {
                let s = self.sessions.get_mut(session_id).expect("logged session");
                s.advance_or_reject(*passed, Phase::Training);
            }
            Event::TrainingAnswered {
                session_id,
                item,
                correct,
                ..
            } => {
                let n = self.training_items;
                let s = self.sessions.get_mut(session_id).expect("logged session");
                if *correct {
                    s.training_item = item + 1;
                    if s.training_item >= n {
                        s.phase = Phase::Gating;
                    }
                } else if let Some(r) = s.training_retries.get_mut(*item) {
                    *r += 1;
                }
            }
            Event::GatingScored {
                session_id,
                correct,
                passed,
                ..
            } => {
                let s = self.sessions.get_mut(session_id).expect("logged session");
                s.gating_score = Some(*correct);
                s.advance_or_reject(*passed, Phase::Main);
            }
            Event::RatingAccepted { session_id, record } => {
                let s = self.sessions.get_mut(session_id).expect("logged session");
                s.rated.push(record.post_id.clone());
                if s.rated.len() == s.assigned.len() {
                    s.phase = Phase::Vcq;
                }
                self.records.push(record.clone());
            }
            Event::VcqSubmitted {
                session_id,
                profile,
            } => {
                let s = self.sessions.get_mut(session_id).expect("logged session");
                s.phase = Phase::Demographics;
                self.profiles
                    .insert(profile.rater_id.clone(), profile.clone());
            }
            Event::DemographicsSubmitted { session_id, fields } => {
                let s = self.sessions.get_mut(session_id).expect("logged session");
                s.phase = Phase::Done;
                if let Some(p) = self.profiles.get_mut(&s.rater_id) {
                    p.demographics = fields.clone();
                }
            }
        }
    }
}

impl Session {
    fn advance_or_reject(&mut self, passed: bool, next: Phase) {
        if passed {
            self.phase = next;
        } else {
            self.rejected_in = Some(self.phase);
            self.phase = Phase::Rejected;
        }
    }
}

/// Checks a branching submission against the tree and builds the record.
/// Leaves must be rated exactly under parents rated at or above `threshold`.
pub fn validate_rating(
    sub: &RatingSubmission,
    rater_id: &str,
    tree: &ValueTree,
    threshold: LikertRating,
) -> Result<AnnotationRecord, ServiceError> {
    let mut high = BTreeMap::new();
    for (node, &r) in &sub.high {
        if tree.find_high(node).is_none() {
            return Err(ServiceError::UnknownNode(node.clone()));
        }
        high.insert(node.clone(), rating(r)?);
    }
    let mut leaves = BTreeMap::new();
    for (key, &r) in &sub.leaves {
        let v: ValueId = key
            .parse()
            .map_err(|_| ServiceError::UnknownNode(key.clone()))?;
        leaves.insert(v, rating(r)?);
    }
    if let Some(missing) = tree.high_ids().find(|id| !high.contains_key(*id)) {
        return Err(ServiceError::MissingParent(missing.to_string()));
    }
    let expected: BTreeSet<ValueId> = tree
        .expand_branches(&high, threshold)
        .map_err(|e| ServiceError::InvalidRequest(e.to_string()))?;
    if let Some(&extra) = leaves.keys().find(|v| !expected.contains(v)) {
        return Err(ServiceError::LeafUnderUnexpandedParent {
            leaf: extra.key().to_string(),
            parent: tree.parent_id(extra).to_string(),
        });
    }
    if let Some(&missing) = expected.iter().find(|v| !leaves.contains_key(v)) {
        return Err(ServiceError::MissingLeaf {
            leaf: missing.key().to_string(),
            parent: tree.parent_id(missing).to_string(),
        });
    }
    let mut record = AnnotationRecord::new(sub.post_id.clone(), rater_id, complete_vector(&leaves));
    record.expanded = tree
        .high_ids()
        .filter(|id| high[*id] >= threshold)
        .map(String::from)
        .collect();
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(high: [i64; 4], leaves: &[(&str, i64)]) -> RatingSubmission {
        let tree = ValueTree::default();
        RatingSubmission {
            post_id: "p".into(),
            high: tree.high_ids().map(String::from).zip(high).collect(),
            leaves: leaves.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn check(s: &RatingSubmission) -> Result<AnnotationRecord, ServiceError> {
        validate_rating(s, "r", &ValueTree::default(), LikertRating::new(1).unwrap())
    }

    #[test]
    fn all_zero_parents_need_no_leaves() {
        let r = check(&sub([0; 4], &[])).unwrap();
        assert_eq!(r.ratings, valuelens::ValueVector::zeros());
        assert!(r.expanded.is_empty());
    }

    #[test]
    fn leaf_under_unexpanded_parent() {
        let e = check(&sub([0; 4], &[("humility", 2)])).unwrap_err();
        assert_eq!(e.code(), "leaf_under_unexpanded_parent");
        assert!(e.is_tree_inconsistency());
    }

    #[test]
    fn missing_leaf_and_parent() {
        let tree = ValueTree::default();
        let first = tree.high_ids().next().unwrap().to_string();
        let mut s = sub([0; 4], &[]);
        s.high.insert(first.clone(), 3);
        assert_eq!(check(&s).unwrap_err().code(), "missing_leaf");
        s.high.remove(&first);
        assert_eq!(check(&s).unwrap_err(), ServiceError::MissingParent(first));
    }

    #[test]
    fn out_of_range() {
        assert_eq!(
            check(&sub([7, 0, 0, 0], &[])).unwrap_err(),
            ServiceError::OutOfRange(7)
        );
    }

    #[test]
    fn phase_display() {
        assert_eq!(Phase::Demographics.to_string(), "demographics");
        assert!(Phase::Attention < Phase::Done);
    }
}
