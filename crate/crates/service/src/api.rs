use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;

use emotrans_core::bws::{Judgment, Reliability, ScoreTable, DEFAULT_RELIABILITY_ITERATIONS};
use emotrans_core::data::Emotion;

use crate::campaign::{Acknowledgment, CampaignHandle, NextTuple, Progress};
use crate::error::ServiceError;

/// Campaigns served by one process, keyed by id.
#[derive(Clone, Default)]
pub struct AppState {
    campaigns: Arc<HashMap<String, Arc<CampaignHandle>>>,
}

impl AppState {
    pub fn new(handles: impl IntoIterator<Item = CampaignHandle>) -> Self {
        let campaigns = handles
            .into_iter()
            .map(|h| (h.campaign().id().to_string(), Arc::new(h)))
            .collect();
        AppState {
            campaigns: Arc::new(campaigns),
        }
    }

    pub fn campaign(&self, id: &str) -> Result<Arc<CampaignHandle>, ServiceError> {
        self.campaigns
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no campaign {id:?} is loaded")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/campaigns/{id}/next", get(next))
        .route("/campaigns/{id}/judgments", post(submit))
        .route("/campaigns/{id}/scores", get(scores))
        .route("/campaigns/{id}/reliability", get(reliability))
        .route("/campaigns/{id}/progress", get(progress))
        .with_state(state)
}

fn parse_emotion(raw: &str) -> Result<Emotion, ServiceError> {
    raw.parse().map_err(|_| ServiceError::Validation(format!("unknown emotion {raw:?}")))
}

/// Runs blocking store or aggregation work off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<Json<T>, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Io(format!("worker failed: {e}")))?
        .map(Json)
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: String,
    emotion: String,
}

async fn next(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<NextQuery>,
) -> Result<Json<NextTuple>, ServiceError> {
    let handle = state.campaign(&id)?;
    let emotion = parse_emotion(&q.emotion)?;
    handle.next_tuple(&q.annotator, emotion).map(Json)
}

async fn submit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Judgment>, JsonRejection>,
) -> Result<Json<Acknowledgment>, ServiceError> {
    let handle = state.campaign(&id)?;
    let Json(j) = body.map_err(|e| ServiceError::Validation(e.body_text()))?;
    blocking(move || handle.submit(j)).await
}

#[derive(Deserialize)]
struct ScoresQuery {
    emotion: String,
}

async fn scores(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ScoresQuery>,
) -> Result<Json<ScoreTable>, ServiceError> {
    let handle = state.campaign(&id)?;
    let emotion = parse_emotion(&q.emotion)?;
    blocking(move || handle.scores(emotion)).await
}

#[derive(Deserialize)]
struct ReliabilityQuery {
    emotion: String,
    iterations: Option<usize>,
    seed: Option<u64>,
}

async fn reliability(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ReliabilityQuery>,
) -> Result<Json<Reliability>, ServiceError> {
    let handle = state.campaign(&id)?;
    let emotion = parse_emotion(&q.emotion)?;
    let iterations = q.iterations.unwrap_or(DEFAULT_RELIABILITY_ITERATIONS);
    let seed = q.seed.unwrap_or(0);
    blocking(move || handle.reliability(emotion, iterations, seed)).await
}

#[derive(Deserialize)]
struct ProgressQuery {
    annotator: String,
}

async fn progress(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ProgressQuery>,
) -> Result<Json<Vec<Progress>>, ServiceError> {
    let handle = state.campaign(&id)?;
    Ok(Json(handle.progress_all(&q.annotator)))
}

/// Serves `state` on `listener` until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
