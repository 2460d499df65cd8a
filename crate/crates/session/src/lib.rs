//! HTTP service for live preference sessions. A human answers each query
//! with one winner per objective; the service refits and proposes the next
//! query in the background while clients poll.

mod error;
mod session;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use dsts_core::runner::write_atomic;
use dsts_core::{InteractionDataset, Query};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use session::{distinct_shown, front_from_models, session_step, Front, Session, SessionConfig, Status, Step};

type Shared = Arc<Mutex<Session>>;

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, Shared>>>,
    data_dir: Option<PathBuf>,
}

impl AppState {
    /// State persisting snapshots into `data_dir` when given. Snapshots
    /// already there are loaded; sessions caught mid-computation resume.
    pub fn new(data_dir: Option<PathBuf>) -> anyhow::Result<Self> {
        let state = Self { sessions: Arc::default(), data_dir };
        if let Some(dir) = &state.data_dir {
            std::fs::create_dir_all(dir)?;
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    let s: Session = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
                    let computing = s.status == Status::Computing;
                    let id = s.id.clone();
                    state.sessions.lock().unwrap().insert(id.clone(), Arc::new(Mutex::new(s)));
                    if computing {
                        state.spawn_step(&id);
                    }
                }
            }
        }
        Ok(state)
    }

    fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions.lock().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    fn persist(&self, s: &Session) -> Result<(), ApiError> {
        if let Some(dir) = &self.data_dir {
            let bytes = serde_json::to_vec_pretty(s).map_err(|e| ApiError::internal(e.to_string()))?;
            write_atomic(&snapshot_path(dir, &s.id), &bytes).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        Ok(())
    }

    /// Compute the next query off the request path.
    fn spawn_step(&self, id: &str) {
        let Ok(shared) = self.get(id) else { return };
        let (config, seed, dataset) = {
            let s = shared.lock().unwrap();
            (s.config.clone(), s.seed, s.dataset.clone())
        };
        let state = self.clone();
        tokio::task::spawn_blocking(move || {
            let n = dataset.len();
            let outcome = session_step(&config, seed, &dataset);
            if let Err(e) = &outcome {
                tracing::warn!(session = %config_id(&shared), "step failed: {e}");
            }
            let mut s = shared.lock().unwrap();
            if s.finish(n, outcome) {
                if let Err(e) = state.persist(&s) {
                    tracing::error!("persisting session {}: {e}", s.id);
                }
            }
        });
    }
}

fn config_id(shared: &Shared) -> String {
    shared.lock().unwrap().id.clone()
}

fn snapshot_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

fn new_id() -> String {
    format!("{:016x}", rand::random::<u64>())
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn create_session(
    State(state): State<AppState>,
    payload: Result<Json<SessionConfig>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let config = body(payload)?;
    config.validate()?;
    let seed = config.seed.unwrap_or_else(rand::random);
    let id = new_id();
    let mut session = Session::new(id.clone(), config, seed);
    // The first query needs no model, so it is ready on return.
    let first = session_step(&session.config, seed, &session.dataset);
    session.finish(0, first);
    if let Some(e) = &session.last_error {
        return Err(ApiError::invalid_config("bounds", e.clone()));
    }
    state.persist(&session)?;
    let status = session.status;
    state.sessions.lock().unwrap().insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(json!({ "id": id, "seed": seed, "status": status }))))
}

/// Payload of `GET /sessions/{id}/query`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub status: Status,
    /// Index the answer will take in the dataset.
    pub query_index: usize,
    pub query: Option<Query>,
    pub design_labels: Vec<String>,
    pub objective_labels: Vec<String>,
}

async fn get_query(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<PendingQuery>, ApiError> {
    let shared = state.get(&id)?;
    let s = shared.lock().unwrap();
    Ok(Json(PendingQuery {
        status: s.status,
        query_index: s.dataset.len(),
        query: s.pending.clone(),
        design_labels: s.config.design_labels.clone(),
        objective_labels: s.config.objective_labels.clone(),
    }))
}

#[derive(Debug, Clone, Deserialize)]
pub struct Submission {
    pub winners: Vec<usize>,
    #[serde(default)]
    pub query_index: Option<usize>,
}

async fn submit_response(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<Submission>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let shared = state.get(&id)?;
    let sub = body(payload)?;
    let n = {
        let mut s = shared.lock().unwrap();
        let before = s.clone();
        s.submit(sub.winners, sub.query_index)?;
        if let Err(e) = state.persist(&s) {
            *s = before;
            return Err(e);
        }
        s.dataset.len()
    };
    state.spawn_step(&id);
    Ok((StatusCode::ACCEPTED, Json(json!({ "accepted": true, "n_responses": n, "status": Status::Computing }))))
}

async fn retry(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let shared = state.get(&id)?;
    {
        let mut s = shared.lock().unwrap();
        s.transition(Status::Computing)?;
        s.last_error = None;
    }
    state.spawn_step(&id);
    Ok(Json(json!({ "status": Status::Computing })))
}

/// Payload of `GET /sessions/{id}/front`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontView {
    pub objective_labels: Vec<String>,
    #[serde(flatten)]
    pub front: Front,
}

async fn get_front(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<FrontView>, ApiError> {
    let shared = state.get(&id)?;
    let s = shared.lock().unwrap();
    Ok(Json(FrontView { objective_labels: s.config.objective_labels.clone(), front: s.front.clone() }))
}

/// Payload of `GET /sessions/{id}/state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub id: String,
    pub status: Status,
    pub seed: u64,
    pub n_responses: usize,
    pub has_pending_query: bool,
    pub last_error: Option<String>,
    pub config: SessionConfig,
    pub dataset: InteractionDataset,
}

async fn get_state(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<StateView>, ApiError> {
    let shared = state.get(&id)?;
    let s = shared.lock().unwrap();
    Ok(Json(StateView {
        id: s.id.clone(),
        status: s.status,
        seed: s.seed,
        n_responses: s.dataset.len(),
        has_pending_query: s.pending.is_some(),
        last_error: s.last_error.clone(),
        config: s.config.clone(),
        dataset: s.dataset.clone(),
    }))
}

/// The API under `/sessions`, with `static_dir` (the UI bundle) served
/// for every other path when given.
pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/query", get(get_query))
        .route("/sessions/{id}/response", post(submit_response))
        .route("/sessions/{id}/retry", post(retry))
        .route("/sessions/{id}/front", get(get_front))
        .route("/sessions/{id}/state", get(get_state))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
