use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{BackendConfig, BackendError, ChatBackend};
use super::parse::{parse_response, ParsedRatings};
use super::{build_prompt_with, Decoding, Template};
use crate::corpus::Post;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchPolicy {
    pub max_attempts: u32,
    pub max_concurrency: usize,
    pub backoff: Duration,
    pub decoding: Decoding,
}

impl Default for BatchPolicy {
    fn default() -> Self {
        BatchPolicy::from(&BackendConfig::default())
    }
}

impl From<&BackendConfig> for BatchPolicy {
    fn from(cfg: &BackendConfig) -> Self {
        BatchPolicy {
            max_attempts: cfg.max_attempts.max(1),
            max_concurrency: cfg.max_concurrency.max(1),
            backoff: Duration::from_millis(cfg.backoff_ms),
            decoding: Decoding {
                temperature: cfg.temperature,
                seed: cfg.decoding_seed,
            },
        }
    }
}

/// A post that could not be annotated, kept for manual review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub post_id: String,
    pub template: Template,
    pub attempts: u32,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub results: BTreeMap<String, ParsedRatings>,
    pub quarantine: Vec<QuarantineEntry>,
    /// Retries spent per post (attempts beyond the first).
    pub retries: BTreeMap<String, u32>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BatchError {
    #[error("backend rejected credentials: {0}")]
    Auth(String),
    #[error(transparent)]
    Backend(BackendError),
}

enum PostResult {
    Done(ParsedRatings, u32),
    Failed(String, u32),
}

fn annotate_one(
    post: &Post,
    template: Template,
    backend: &dyn ChatBackend,
    policy: &BatchPolicy,
) -> Result<PostResult, BatchError> {
    let request = build_prompt_with(template, post, policy.decoding).request();
    let mut last = String::new();
    for attempt in 0..policy.max_attempts {
        if attempt > 0 && !policy.backoff.is_zero() {
            std::thread::sleep(policy.backoff * 2u32.saturating_pow(attempt - 1));
        }
        match backend.complete(&request) {
            Ok(raw) => match parse_response(template, &raw) {
                Ok(parsed) => return Ok(PostResult::Done(parsed, attempt)),
                Err(e) => last = format!("parse: {e}"),
            },
            Err(BackendError::Auth(msg)) => return Err(BatchError::Auth(msg)),
            Err(e) if e.is_retryable() => last = e.to_string(),
            Err(e @ BackendError::Config(_)) => return Err(BatchError::Backend(e)),
            Err(e) => return Ok(PostResult::Failed(e.to_string(), attempt + 1)),
        }
    }
    Ok(PostResult::Failed(last, policy.max_attempts))
}

/// Runs one template over every post with bounded concurrency. Every post
/// ends up in `results` or `quarantine`; the outcome does not depend on
/// completion order. Credential failures abort the whole batch.
pub fn annotate_batch(
    posts: &[Post],
    template: Template,
    backend: &dyn ChatBackend,
    policy: &BatchPolicy,
) -> Result<BatchOutcome, BatchError> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<PostResult, BatchError>>>> =
        Mutex::new((0..posts.len()).map(|_| None).collect());
    let workers = policy.max_concurrency.max(1).min(posts.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= posts.len() {
                    break;
                }
                let r = annotate_one(&posts[i], template, backend, policy);
                let abort = r.is_err();
                slots.lock().expect("no poisoned workers")[i] = Some(r);
                if abort {
                    next.store(posts.len(), Ordering::SeqCst);
                }
            });
        }
    });

    let mut out = BatchOutcome::default();
    for (post, slot) in posts
        .iter()
        .zip(slots.into_inner().expect("workers joined"))
    {
        match slot {
            Some(Ok(PostResult::Done(parsed, retries))) => {
                if retries > 0 {
                    log::info!("post {} succeeded after {} retries", post.id, retries);
                    out.retries.insert(post.id.clone(), retries);
                }
                out.results.insert(post.id.clone(), parsed);
            }
            Some(Ok(PostResult::Failed(error, attempts))) => {
                log::warn!(
                    "post {} quarantined after {attempts} attempts: {error}",
                    post.id
                );
                if attempts > 1 {
                    out.retries.insert(post.id.clone(), attempts - 1);
                }
                out.quarantine.push(QuarantineEntry {
                    post_id: post.id.clone(),
                    template,
                    attempts,
                    error,
                });
            }
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    Ok(out)
}
