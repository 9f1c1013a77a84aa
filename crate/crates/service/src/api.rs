use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ServiceError;
use crate::state::{Phase, RatingSubmission};
use crate::study::Study;

pub type Shared = Arc<Mutex<Study>>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(self.body())).into_response()
    }
}

type ApiResult = Result<Response, ServiceError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::InvalidRequest(e.to_string()))
}

fn ok<T: Serialize>(value: T) -> ApiResult {
    Ok(Json(value).into_response())
}

pub fn router(study: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/next", get(next_step))
        .route("/sessions/{id}/attention", post(attention))
        .route("/sessions/{id}/training", post(training))
        .route("/sessions/{id}/gating", post(gating))
        .route("/sessions/{id}/ratings", post(ratings))
        .route("/sessions/{id}/vcq", post(vcq))
        .route("/sessions/{id}/demographics", post(demographics))
        .route("/export", get(export))
        .with_state(study)
}

fn lock(study: &Shared) -> std::sync::MutexGuard<'_, Study> {
    // A panic mid-request leaves the state as of the last applied event.
    study.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Deserialize)]
struct CreateBody {
    rater_id: String,
}

async fn create_session(State(study): State<Shared>, body: Bytes) -> ApiResult {
    let req: CreateBody = parse(&body)?;
    let mut st = lock(&study);
    let s = st.create_session(&req.rater_id)?;
    Ok((StatusCode::CREATED, Json(s)).into_response())
}

async fn get_session(State(study): State<Shared>, Path(id): Path<String>) -> ApiResult {
    ok(lock(&study).session(&id)?)
}

async fn next_step(State(study): State<Shared>, Path(id): Path<String>) -> ApiResult {
    ok(lock(&study).next_step(&id)?)
}

#[derive(Serialize)]
struct PhaseReply {
    phase: Phase,
}

#[derive(Deserialize)]
struct AttentionBody {
    number: String,
    selected: String,
}

async fn attention(State(study): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: AttentionBody = parse(&body)?;
    let mut st = lock(&study);
    let s = st.submit_attention(&id, &req.number, &req.selected)?;
    ok(serde_json::json!({"passed": s.phase != Phase::Rejected, "phase": s.phase}))
}

#[derive(Deserialize)]
struct TrainingBody {
    item: usize,
    answer: String,
}

#[derive(Serialize)]
struct TrainingReply {
    correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    correct_answer: Option<String>,
    retries: u32,
    next_item: Option<usize>,
    phase: Phase,
}

async fn training(State(study): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: TrainingBody = parse(&body)?;
    let mut st = lock(&study);
    let (correct, correct_answer) = st.submit_training(&id, req.item, &req.answer)?;
    let s = st.session(&id)?;
    ok(TrainingReply {
        correct,
        correct_answer,
        retries: s.training_retries.get(req.item).copied().unwrap_or(0),
        next_item: (s.phase == Phase::Training).then_some(s.training_item),
        phase: s.phase,
    })
}

#[derive(Deserialize)]
struct GatingBody {
    answers: Vec<bool>,
}

async fn gating(State(study): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: GatingBody = parse(&body)?;
    let mut st = lock(&study);
    let s = st.score_gating(&id, &req.answers)?;
    ok(serde_json::json!({
        "correct": s.gating_score,
        "passed": s.phase != Phase::Rejected,
        "phase": s.phase,
    }))
}

async fn ratings(State(study): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: RatingSubmission = parse(&body)?;
    let mut st = lock(&study);
    let record = st.submit_rating(&id, &req)?;
    let s = st.session(&id)?;
    ok(serde_json::json!({
        "record": record,
        "rated": s.rated.len(),
        "total": s.assigned.len(),
        "phase": s.phase,
    }))
}

#[derive(Deserialize)]
struct VcqBody {
    answers: Vec<i64>,
}

async fn vcq(State(study): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: VcqBody = parse(&body)?;
    let mut st = lock(&study);
    ok(PhaseReply {
        phase: st.submit_vcq(&id, &req.answers)?.phase,
    })
}

/// Open key-value schema; non-string values are stored as their JSON text.
async fn demographics(
    State(study): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult {
    let raw: BTreeMap<String, Value> = parse(&body)?;
    let fields = raw
        .into_iter()
        .map(|(k, v)| {
            let v = match v {
                Value::String(s) => s,
                other => other.to_string(),
            };
            (k, v)
        })
        .collect();
    let mut st = lock(&study);
    ok(PhaseReply {
        phase: st.submit_demographics(&id, &fields)?.phase,
    })
}

async fn export(State(study): State<Shared>) -> ApiResult {
    ok(lock(&study).export())
}

/// Serves the API until the listener fails.
pub async fn serve(study: Study, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let app = router(Arc::new(Mutex::new(study)));
    axum::serve(listener, app).await
}
