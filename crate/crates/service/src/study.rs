use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use valuelens::calibration::{RaterProfile, VcqItem};
use valuelens::consensus::AnnotationRecord;
use valuelens::corpus::{render_context, Post};
use valuelens::io::{read_jsonl, write_json, write_jsonl};
use valuelens::{LikertRating, ValueId, ValueTree};

use crate::error::ServiceError;
use crate::fixtures::{Fixtures, NumberCheck};
use crate::state::{AssignmentMode, Event, Phase, RatingSubmission, Session, StudyState};

pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    /// Assignment seed; the seed in an existing event log wins.
    pub seed: u64,
    pub posts_per_session: usize,
    /// High-level rating at which a branch is expanded.
    pub threshold: u8,
    pub assignment: AssignmentMode,
    /// Event log and snapshots; in-memory only when unset.
    pub data_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            seed: 0,
            posts_per_session: 30,
            threshold: 1,
            assignment: AssignmentMode::Uniform,
            data_dir: None,
        }
    }
}

/// Append-only line-delimited JSON event log.
struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    fn open(path: &Path) -> Result<Self, ServiceError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ServiceError::Storage(format!("{}: {e}", path.display())))?;
        Ok(EventLog {
            path: path.to_path_buf(),
            file,
        })
    }

    fn append(&mut self, event: &Event) -> Result<(), ServiceError> {
        let mut line = serde_json::to_string(event).expect("events serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| ServiceError::Storage(format!("{}: {e}", self.path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Export {
    pub records: Vec<AnnotationRecord>,
    pub profiles: Vec<RaterProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingView {
    pub index: usize,
    pub post_id: String,
    pub text: String,
    pub question: String,
    pub options: Vec<String>,
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatingView {
    pub post_id: String,
    pub text: String,
    pub value: ValueId,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchView {
    pub id: String,
    pub name: String,
    pub leaves: Vec<ValueId>,
}

/// What the client should show next.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum NextStep {
    Attention {
        number: NumberCheck,
        select_prompt: String,
        select_options: Vec<String>,
    },
    Training(TrainingView),
    Gating {
        items: Vec<GatingView>,
    },
    Main {
        post_id: String,
        text: String,
        rated: usize,
        total: usize,
        threshold: u8,
        branches: Vec<BranchView>,
    },
    Vcq {
        items: Vec<VcqItem>,
    },
    Demographics,
    Done,
    Rejected {
        during: Option<Phase>,
    },
}

/// The study: state, its log, and the static material sessions run over.
pub struct Study {
    config: ServiceConfig,
    fixtures: Fixtures,
    tree: ValueTree,
    threshold: LikertRating,
    pool: BTreeMap<String, Post>,
    pool_ids: Vec<String>,
    state: StudyState,
    log: Option<EventLog>,
}

impl Study {
    /// Opens a study, replaying `data_dir/events.jsonl` when present.
    pub fn open(
        config: ServiceConfig,
        fixtures: Fixtures,
        tree: ValueTree,
        pool: Vec<Post>,
    ) -> Result<Self, ServiceError> {
        let threshold = LikertRating::new(config.threshold)
            .ok()
            .filter(|t| t.get() >= 1)
            .ok_or_else(|| {
                ServiceError::InvalidRequest(format!(
                    "threshold {} not in [1, 6]",
                    config.threshold
                ))
            })?;
        let pool: BTreeMap<String, Post> = pool.into_iter().map(|p| (p.id.clone(), p)).collect();
        if pool.len() < config.posts_per_session {
            return Err(ServiceError::PoolTooSmall {
                pool: pool.len(),
                need: config.posts_per_session,
            });
        }
        let mut study = Study {
            pool_ids: pool.keys().cloned().collect(),
            pool,
            threshold,
            tree,
            fixtures,
            state: StudyState::default(),
            log: None,
            config,
        };
        let mut replayed = Vec::new();
        if let Some(dir) = study.config.data_dir.clone() {
            std::fs::create_dir_all(&dir)
                .map_err(|e| ServiceError::Storage(format!("{}: {e}", dir.display())))?;
            let path = dir.join(EVENTS_FILE);
            if path.exists() {
                replayed =
                    read_jsonl::<Event>(&path).map_err(|e| ServiceError::Storage(e.to_string()))?;
            }
            study.log = Some(EventLog::open(&path)?);
        }
        if replayed.is_empty() {
            study.commit(Event::StudyOpened {
                seed: study.config.seed,
                pool_size: study.pool.len(),
                posts_per_session: study.config.posts_per_session,
                training_items: study.fixtures.training.len(),
            })?;
        } else {
            for e in &replayed {
                study.state.apply(e);
            }
            study.check_replay(&replayed[0])?;
            log::info!("replayed {} events", replayed.len());
        }
        log::info!(
            "study open: seed {}, {} pool posts, {} sessions",
            study.state.seed,
            study.pool.len(),
            study.state.sessions.len()
        );
        Ok(study)
    }

    fn check_replay(&self, first: &Event) -> Result<(), ServiceError> {
        let Event::StudyOpened {
            seed,
            posts_per_session,
            training_items,
            ..
        } = first
        else {
            return Err(ServiceError::Storage(
                "event log does not start with study_opened".into(),
            ));
        };
        if *seed != self.config.seed {
            log::warn!(
                "configured seed {} ignored; event log uses {seed}",
                self.config.seed
            );
        }
        if *posts_per_session != self.config.posts_per_session
            || *training_items != self.fixtures.training.len()
        {
            return Err(ServiceError::Storage(
                "event log was written with a different session size or training set".into(),
            ));
        }
        for s in self.state.sessions.values() {
            if let Some(p) = s.assigned.iter().find(|p| !self.pool.contains_key(*p)) {
                return Err(ServiceError::Storage(format!(
                    "logged post `{p}` is not in the pool"
                )));
            }
        }
        Ok(())
    }

    fn commit(&mut self, event: Event) -> Result<Event, ServiceError> {
        if let Some(log) = self.log.as_mut() {
            log.append(&event)?;
        }
        self.state.apply(&event);
        Ok(event)
    }

    /// Commits and writes snapshots when the session just finished.
    fn commit_for(&mut self, id: &str, event: Event) -> Result<Event, ServiceError> {
        let event = self.commit(event)?;
        if !self.state.sessions[id].phase.is_open() {
            self.snapshot()?;
        }
        Ok(event)
    }

    pub fn state(&self) -> &StudyState {
        &self.state
    }

    pub fn fixtures(&self) -> &Fixtures {
        &self.fixtures
    }

    pub fn seed(&self) -> u64 {
        self.state.seed
    }

    pub fn session(&self, id: &str) -> Result<&Session, ServiceError> {
        self.state.session(id)
    }

    pub fn create_session(&mut self, rater_id: &str) -> Result<&Session, ServiceError> {
        let event = self
            .state
            .create_session(rater_id, &self.pool_ids, self.config.assignment)?;
        let Event::SessionCreated { session_id, .. } = self.commit(event)? else {
            unreachable!("create_session yields session_created")
        };
        self.state.session(&session_id)
    }

    pub fn submit_attention(
        &mut self,
        id: &str,
        number: &str,
        selected: &str,
    ) -> Result<&Session, ServiceError> {
        let e = self
            .state
            .submit_attention(id, number, selected, &self.fixtures)?;
        self.commit_for(id, e)?;
        self.state.session(id)
    }

    /// Returns whether the answer was correct and, if not, the right one.
    pub fn submit_training(
        &mut self,
        id: &str,
        item: usize,
        answer: &str,
    ) -> Result<(bool, Option<String>), ServiceError> {
        let e = self
            .state
            .submit_training(id, item, answer, &self.fixtures)?;
        let correct = matches!(e, Event::TrainingAnswered { correct: true, .. });
        self.commit(e)?;
        Ok((
            correct,
            (!correct).then(|| self.fixtures.training[item].answer.clone()),
        ))
    }

    pub fn score_gating(&mut self, id: &str, answers: &[bool]) -> Result<&Session, ServiceError> {
        let e = self.state.score_gating(id, answers, &self.fixtures)?;
        self.commit_for(id, e)?;
        self.state.session(id)
    }

    pub fn submit_rating(
        &mut self,
        id: &str,
        sub: &RatingSubmission,
    ) -> Result<AnnotationRecord, ServiceError> {
        let e = self
            .state
            .submit_rating(id, sub, &self.tree, self.threshold)?;
        match self.commit(e)? {
            Event::RatingAccepted { record, .. } => Ok(record),
            _ => unreachable!("submit_rating yields rating_accepted"),
        }
    }

    pub fn submit_vcq(&mut self, id: &str, answers: &[i64]) -> Result<&Session, ServiceError> {
        let e = self.state.submit_vcq(id, answers, &self.fixtures)?;
        self.commit(e)?;
        self.state.session(id)
    }

    pub fn submit_demographics(
        &mut self,
        id: &str,
        fields: &BTreeMap<String, String>,
    ) -> Result<&Session, ServiceError> {
        let e = self.state.submit_demographics(id, fields)?;
        self.commit_for(id, e)?;
        self.state.session(id)
    }

    pub fn next_step(&self, id: &str) -> Result<NextStep, ServiceError> {
        let s = self.state.session(id)?;
        let fx = &self.fixtures;
        Ok(match s.phase {
            Phase::Attention => NextStep::Attention {
                number: fx.attention.number.clone(),
                select_prompt: fx.attention.select.prompt.clone(),
                select_options: fx.attention.select.options.clone(),
            },
            Phase::Training => {
                let i = s.training_item;
                let t = &fx.training[i];
                NextStep::Training(TrainingView {
                    index: i,
                    post_id: t.post_id.clone(),
                    text: t.text.clone(),
                    question: t.question.clone(),
                    options: t.options.clone(),
                    retries: s.training_retries.get(i).copied().unwrap_or(0),
                })
            }
            Phase::Gating => NextStep::Gating {
                items: fx
                    .gating
                    .iter()
                    .map(|g| GatingView {
                        post_id: g.post_id.clone(),
                        text: g.text.clone(),
                        value: g.value,
                        question: valuelens::calibration::question_for(g.value),
                    })
                    .collect(),
            },
            Phase::Main => {
                let post_id = s
                    .assigned
                    .iter()
                    .find(|p| !s.rated.contains(p))
                    .expect("main phase has an unrated post")
                    .clone();
                NextStep::Main {
                    text: render_context(&self.pool[&post_id]),
                    post_id,
                    rated: s.rated.len(),
                    total: s.assigned.len(),
                    threshold: self.threshold.get(),
                    branches: self.branches(),
                }
            }
            Phase::Vcq => NextStep::Vcq {
                items: fx.vcq.items.clone(),
            },
            Phase::Demographics => NextStep::Demographics,
            Phase::Done => NextStep::Done,
            Phase::Rejected => NextStep::Rejected {
                during: s.rejected_in,
            },
        })
    }

    fn branches(&self) -> Vec<BranchView> {
        self.tree
            .high_nodes()
            .map(|n| {
                let id = self.tree.id(n).expect("tree node").to_string();
                BranchView {
                    name: self.tree.name(n).expect("tree node").to_string(),
                    leaves: self.tree.leaves(&id).expect("tree node").to_vec(),
                    id,
                }
            })
            .collect()
    }

    pub fn export(&self) -> Export {
        Export {
            records: self.state.records.clone(),
            profiles: self.state.profiles.values().cloned().collect(),
        }
    }

    /// Writes derived `records.jsonl`, `profiles.jsonl` and `sessions.json`.
    pub fn snapshot(&self) -> Result<(), ServiceError> {
        let Some(dir) = &self.config.data_dir else {
            return Ok(());
        };
        let export = self.export();
        let io = |e: valuelens::io::IoError| ServiceError::Storage(e.to_string());
        write_jsonl(&dir.join("records.jsonl"), &export.records).map_err(io)?;
        write_jsonl(&dir.join("profiles.jsonl"), &export.profiles).map_err(io)?;
        write_json(&dir.join("sessions.json"), &self.state.sessions).map_err(io)?;
        Ok(())
    }
}
