use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::parse::serialize_values;
use super::Template;
use crate::value_system::{LikertRating, ValueId, ValueVector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: &str) -> Self {
        ChatMessage {
            role: role.to_string(),
            content: content.to_string(),
        }
    }
}

/// One chat-completion call. `template` and `post_text` are local metadata
/// and are not sent over the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub template: Template,
    pub post_text: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub seed: i64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response shape: {0}")]
    Protocol(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

impl BackendError {
    /// Whether another attempt could succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) | BackendError::Protocol(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            BackendError::Auth(_) | BackendError::Config(_) => false,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;

    /// Short human-readable identity for logs and manifests.
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Mock,
}

/// Backend selection. A fine-tuned model is just another `model` string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub credential_env: Option<String>,
    pub max_attempts: u32,
    pub timeout_secs: u64,
    pub max_concurrency: usize,
    /// First retry delay; doubles per attempt.
    pub backoff_ms: u64,
    /// JSON pointer to the assistant text in the response body.
    pub response_pointer: String,
    pub seed: Option<u64>,
    pub temperature: f64,
    pub decoding_seed: i64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            model: "mock".to_string(),
            credential_env: None,
            max_attempts: 3,
            timeout_secs: 60,
            max_concurrency: 4,
            backoff_ms: 500,
            response_pointer: "/choices/0/message/content".to_string(),
            seed: Some(0),
            temperature: 1.0,
            decoding_seed: 0,
        }
    }
}

impl BackendConfig {
    pub fn mock(seed: u64) -> Self {
        BackendConfig {
            seed: Some(seed),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        match self.kind {
            BackendKind::Remote => {
                if self.endpoint.as_deref().unwrap_or("").is_empty() {
                    return Err(BackendError::Config(
                        "remote backend needs `endpoint`".into(),
                    ));
                }
                if self.credential_env.as_deref().unwrap_or("").is_empty() {
                    return Err(BackendError::Config(
                        "remote backend needs `credential_env`".into(),
                    ));
                }
            }
            BackendKind::Mock => {
                if self.seed.is_none() {
                    return Err(BackendError::Config("mock backend needs `seed`".into()));
                }
            }
        }
        if self.max_attempts == 0 || self.max_concurrency == 0 {
            return Err(BackendError::Config(
                "`max_attempts` and `max_concurrency` must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn ChatBackend>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Mock => Box::new(MockBackend::new(self.seed.expect("validated"))),
            BackendKind::Remote => Box::new(RemoteBackend::from_config(self)?),
        })
    }
}

/// Deterministic stand-in for a hosted model.
///
/// Ratings are a pure function of (template id, post text, seed): the
/// SHA-256 of `template_id ‖ 0x00 ‖ post_text ‖ seed_le` seeds a ChaCha8
/// stream. Values: each concept is 0 with probability 0.55, otherwise
/// uniform on 1..=6. Comprehensibility: each concept and the final rating
/// are 3 with probability 0.85, otherwise uniform on 0..=2. NSFW: 0 with
/// probability 0.9, otherwise uniform on 1..=3.
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
}

const COMPREHENSIBILITY_CONCEPTS: [&str; 4] = [
    "READABILITY",
    "COHERENCE",
    "SPAM BEHAVIOR",
    "CONTEXT REQUIRED FOR UNDERSTANDING",
];
const NSFW_CONCEPTS: [&str; 3] = ["SEXUAL", "VIOLENT", "DEROGATORY"];

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        MockBackend { seed }
    }

    fn rng(&self, template: Template, post_text: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(template.id().as_bytes());
        h.update([0u8]);
        h.update(post_text.as_bytes());
        h.update(self.seed.to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    /// The vector the mock reports for a post under the values template.
    pub fn values_for(&self, post_text: &str) -> ValueVector {
        let mut rng = self.rng(Template::Values, post_text);
        let mut v = ValueVector::zeros();
        for id in ValueId::ALL {
            let r = if rng.random_bool(0.55) {
                0
            } else {
                rng.random_range(1..=6)
            };
            v.set(id, LikertRating::new(r).expect("in range"));
        }
        v
    }

    fn filter_response(&self, template: Template, post_text: &str) -> String {
        let mut rng = self.rng(template, post_text);
        #[allow(clippy::type_complexity)]
        let (concepts, mut draw): (&[&str], Box<dyn FnMut(&mut ChaCha8Rng) -> u8>) = match template
        {
            Template::Comprehensibility => (
                &COMPREHENSIBILITY_CONCEPTS,
                Box::new(|r: &mut ChaCha8Rng| {
                    if r.random_bool(0.85) {
                        3
                    } else {
                        r.random_range(0..=2)
                    }
                }),
            ),
            _ => (
                &NSFW_CONCEPTS,
                Box::new(|r: &mut ChaCha8Rng| {
                    if r.random_bool(0.9) {
                        0
                    } else {
                        r.random_range(1..=3)
                    }
                }),
            ),
        };
        let mut app = serde_json::Map::new();
        for c in concepts {
            let r = draw(&mut rng);
            app.insert(c.to_string(), json!({"Why": "mock rationale", "Rating": r}));
        }
        let fin = draw(&mut rng);
        json!({
            "Codebook Application": app,
            "Final Rating": {"Why": "mock rationale", "Rating": fin},
        })
        .to_string()
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        Ok(match request.template {
            Template::Values => serialize_values(&self.values_for(&request.post_text)),
            t => self.filter_response(t, &request.post_text),
        })
    }

    fn describe(&self) -> String {
        format!("mock(seed={})", self.seed)
    }
}

/// Chat-completion over HTTP: POST `{model, messages, temperature, seed}`
/// with a bearer credential, assistant text read at `response_pointer`.
pub struct RemoteBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: String,
    pointer: String,
}

impl RemoteBackend {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let var = cfg.credential_env.clone().unwrap_or_default();
        let api_key = std::env::var(&var)
            .map_err(|_| BackendError::Auth(format!("environment variable `{var}` is not set")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(RemoteBackend {
            client,
            endpoint: cfg.endpoint.clone().unwrap_or_default(),
            model: cfg.model.clone(),
            api_key,
            pointer: cfg.response_pointer.clone(),
        })
    }
}

impl ChatBackend for RemoteBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "seed": request.seed,
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(BackendError::Auth(format!("HTTP {status}"))),
            _ => return Err(BackendError::Status { status, body: text }),
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))?;
        value
            .pointer(&self.pointer)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Protocol(format!("no string at `{}`", self.pointer)))
    }

    fn describe(&self) -> String {
        format!("remote({} @ {})", self.model, self.endpoint)
    }
}
