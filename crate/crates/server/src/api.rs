//! HTTP routes, all under `/v1`.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sparqlgen_core::harvest::MetadataStatus;
use sparqlgen_core::pipeline::{AnswerMode, ConversationTurn, TurnRequest};
use tokio_stream::wrappers::UnboundedReceiverStream;
use tokio_stream::StreamExt;

use crate::state::{unix_now, AppState, DatasetIndex, ReindexRejected, Snapshot};
use crate::turnlog::TurnLogEntry;

/// Response header carrying the snapshot generation that served a request.
pub const GENERATION_HEADER: &str = "x-index-generation";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApiError {
    #[error("missing parameter {0}")]
    MissingParameter(&'static str),
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("the index is not built yet")]
    NotIndexed,
    #[error("missing or invalid admin token")]
    Unauthorized,
    #[error("a reindex of {0:?} is already running")]
    ReindexInFlight(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::MissingParameter(_) => "missing_parameter",
            ApiError::EmptyQuestion => "empty_question",
            ApiError::UnknownDataset(_) => "unknown_dataset",
            ApiError::NotIndexed => "not_indexed",
            ApiError::Unauthorized => "unauthorized",
            ApiError::ReindexInFlight(_) => "reindex_in_flight",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::MissingParameter(_) | ApiError::EmptyQuestion => StatusCode::BAD_REQUEST,
            ApiError::UnknownDataset(_) => StatusCode::NOT_FOUND,
            ApiError::NotIndexed => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::ReindexInFlight(_) => StatusCode::CONFLICT,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        let mut response = (self.status(), Json(body)).into_response();
        if self == ApiError::Unauthorized {
            response.headers_mut().insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
        }
        response
    }
}

impl From<ReindexRejected> for ApiError {
    fn from(e: ReindexRejected) -> Self {
        match e {
            ReindexRejected::UnknownDataset(d) => ApiError::UnknownDataset(d),
            ReindexRejected::InFlight(d) => ApiError::ReindexInFlight(d),
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/status", get(status))
        .route("/v1/ask", get(ask))
        .route("/v1/chat", post(chat))
        .route("/v1/admin/reindex", post(reindex))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

/// Resolves the dataset and question and picks the snapshot to answer from.
fn prepare(
    state: &AppState,
    dataset: Option<&str>,
    question: Option<&str>,
) -> Result<(Arc<Snapshot>, DatasetIndex, String), ApiError> {
    let dataset = dataset.ok_or(ApiError::MissingParameter("dataset"))?;
    if state.config.dataset(dataset).is_none() {
        return Err(ApiError::UnknownDataset(dataset.to_string()));
    }
    let question = question.map(str::trim).unwrap_or_default();
    if question.is_empty() {
        return Err(ApiError::EmptyQuestion);
    }
    let snapshot = state.snapshot().ok_or(ApiError::NotIndexed)?;
    let index = snapshot.datasets.get(dataset).cloned().ok_or(ApiError::NotIndexed)?;
    Ok((snapshot, index, question.to_string()))
}

fn log_turn(state: &AppState, route: &str, dataset: &str, generation: u64, turn: &ConversationTurn) {
    if let Some(log) = &state.turn_log {
        log.record(&TurnLogEntry {
            timestamp: unix_now(),
            route: route.into(),
            dataset: dataset.into(),
            generation,
            turn: turn.clone(),
        });
    }
}

fn generation_headers(generation: u64) -> HeaderMap {
    let mut headers = HeaderMap::new();
    headers.insert(GENERATION_HEADER, HeaderValue::from(generation));
    headers
}

#[derive(Debug, Deserialize)]
pub struct AskParams {
    pub dataset: Option<String>,
    pub question: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AskResponse {
    pub dataset: String,
    pub question: String,
    /// Empty when no query could be produced.
    pub query: String,
}

async fn ask(State(state): State<Arc<AppState>>, Query(params): Query<AskParams>) -> Result<Response, ApiError> {
    let (snapshot, index, question) = prepare(&state, params.dataset.as_deref(), params.question.as_deref())?;
    let _permit = state.turn_limit.acquire().await.expect("turn semaphore is never closed");
    let request = TurnRequest::new(&question)
        .endpoint(&index.binding.endpoint_url)
        .mode(AnswerMode::QueryOnly);
    let turn = index.pipeline.answer(&request).await;
    log_turn(&state, "ask", &index.binding.id, snapshot.generation, &turn);
    let body = AskResponse {
        dataset: index.binding.id.clone(),
        question: params.question.unwrap_or_default(),
        query: turn.final_query.unwrap_or_default(),
    };
    Ok((generation_headers(snapshot.generation), Json(body)).into_response())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default)]
    pub question: Option<String>,
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub language: String,
}

async fn chat(State(state): State<Arc<AppState>>, Json(body): Json<ChatRequest>) -> Result<Response, ApiError> {
    let (snapshot, index, question) = prepare(&state, body.dataset.as_deref(), body.question.as_deref())?;
    let permit = state.turn_limit.clone().acquire_owned().await.expect("turn semaphore is never closed");
    let request = TurnRequest::new(question).language(body.language).endpoint(&index.binding.endpoint_url);
    let (tx, rx) = tokio::sync::mpsc::unbounded_channel();
    let task_state = state.clone();
    let generation = snapshot.generation;
    tokio::spawn(async move {
        let _permit = permit;
        let turn = index
            .pipeline
            .answer_streaming(&request, |event| {
                let _ = tx.send(event);
            })
            .await;
        log_turn(&task_state, "chat", &index.binding.id, generation, &turn);
    });
    let events = UnboundedReceiverStream::new(rx).map(|event| {
        let sse = Event::default().event(event.name()).data(event.payload().to_string());
        Ok::<_, Infallible>(sse)
    });
    Ok((generation_headers(generation), Sse::new(events).keep_alive(KeepAlive::default())).into_response())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStatus {
    pub dataset_id: String,
    pub endpoint_url: String,
    pub metadata_status: MetadataStatus,
    pub example_count: usize,
    pub shape_count: usize,
    pub index_items: usize,
    pub index_checksum: Option<String>,
    /// Seconds since the Unix epoch.
    pub last_harvest: Option<u64>,
    pub reindex_in_flight: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusResponse {
    pub indexed: bool,
    pub generation: Option<u64>,
    pub built_at: Option<u64>,
    pub last_error: Option<String>,
    pub datasets: Vec<DatasetStatus>,
}

pub fn status_of(state: &AppState) -> StatusResponse {
    let snapshot = state.snapshot();
    let in_flight = state.reindex_in_flight();
    let datasets = state
        .config
        .datasets
        .iter()
        .map(|binding| {
            let record = snapshot.as_ref().and_then(|s| s.records.get(&binding.endpoint_url));
            let index = snapshot.as_ref().and_then(|s| s.datasets.get(&binding.id));
            let kb = index.map(|i| i.knowledge());
            DatasetStatus {
                dataset_id: binding.id.clone(),
                endpoint_url: binding.endpoint_url.clone(),
                metadata_status: record.map(|r| r.endpoint.metadata_status).unwrap_or_default(),
                example_count: kb.map_or(0, |kb| {
                    kb.examples.values().filter(|e| e.endpoint_url == binding.endpoint_url).count()
                }),
                shape_count: kb.map_or(0, |kb| {
                    kb.shapes.values().filter(|s| s.endpoint_url == binding.endpoint_url).count()
                }),
                index_items: kb.map_or(0, |kb| kb.index.len()),
                index_checksum: index.map(|i| i.checksum.clone()),
                last_harvest: record.map(|r| r.harvested_at),
                reindex_in_flight: in_flight.contains(&binding.id),
            }
        })
        .collect();
    StatusResponse {
        indexed: snapshot.is_some(),
        generation: snapshot.as_ref().map(|s| s.generation),
        built_at: snapshot.as_ref().map(|s| s.built_at),
        last_error: state.last_error(),
        datasets,
    }
}

async fn status(State(state): State<Arc<AppState>>) -> Response {
    let body = status_of(&state);
    let code = if body.indexed { StatusCode::OK } else { StatusCode::SERVICE_UNAVAILABLE };
    (code, Json(body)).into_response()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReindexRequest {
    pub dataset: String,
}

fn authorized(state: &AppState, headers: &HeaderMap) -> bool {
    let Some(expected) = &state.admin_token else { return false };
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|token| token == expected)
}

async fn reindex(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    if !authorized(&state, &headers) {
        return Err(ApiError::Unauthorized);
    }
    let body: ReindexRequest = serde_json::from_slice(&body).map_err(|_| ApiError::MissingParameter("dataset"))?;
    state.start_reindex(&body.dataset)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "dataset": body.dataset, "status": "accepted" }))).into_response())
}
