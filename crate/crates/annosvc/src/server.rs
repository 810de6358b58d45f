//! HTTP routes over a shared [`Study`].

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use emoctx_core::corpus::{read_records, to_line};
use emoctx_core::{EventChain, EventRecord};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::config::ServiceConfig;
use crate::study::{Study, StudyError, StudyInstance, SubmitRequest};

/// Shared state; every mutation goes through the one mutex.
#[derive(Clone)]
pub struct AppState {
    study: Arc<Mutex<Study>>,
}

impl AppState {
    pub fn new(study: Study) -> Self {
        Self {
            study: Arc::new(Mutex::new(study)),
        }
    }

    pub fn lock(&self) -> MutexGuard<'_, Study> {
        self.study.lock().unwrap_or_else(|p| p.into_inner())
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for StudyError {
    fn into_response(self) -> Response {
        let status = match &self {
            StudyError::UnknownSession(_) => StatusCode::NOT_FOUND,
            StudyError::NoPendingTask | StudyError::StaleTask(_) | StudyError::Duplicate(_) => StatusCode::CONFLICT,
            StudyError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StudyError::Config(_) | StudyError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    annotator_id: String,
}

#[derive(Serialize)]
struct SessionCreated {
    session_id: String,
}

async fn create_session(State(state): State<AppState>, Json(body): Json<CreateSession>) -> Result<impl IntoResponse, StudyError> {
    let session_id = state.lock().create_session(&body.annotator_id)?;
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id })))
}

async fn next_task(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, StudyError> {
    Ok(Json(state.lock().next_task(&id)?))
}

async fn submit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<SubmitRequest>,
) -> Result<impl IntoResponse, StudyError> {
    Ok(Json(state.lock().submit(&id, body)?))
}

async fn progress(State(state): State<AppState>) -> impl IntoResponse {
    Json(state.lock().progress())
}

/// JSON bundle by default; `?format=jsonl` streams the records one per line.
async fn export(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Result<Response, StudyError> {
    let bundle = state.lock().export();
    match q.get("format").map(String::as_str) {
        Some("jsonl") => {
            let mut body = String::new();
            for r in &bundle.records {
                body.push_str(&to_line(r)?);
                body.push('\n');
            }
            Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
        }
        None | Some("json") => Ok(Json(bundle).into_response()),
        Some(other) => Err(StudyError::Invalid(format!("unknown export format {other:?}"))),
    }
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/next", get(next_task))
        .route("/api/sessions/{id}/annotations", post(submit))
        .route("/api/admin/progress", get(progress))
        .route("/api/admin/export", get(export))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Study instances from the configured event and chain files.
pub fn load_instances(config: &ServiceConfig) -> Result<Vec<StudyInstance>, StudyError> {
    let mut instances = Vec::new();
    if let Some(p) = &config.events {
        instances.extend(read_records::<EventRecord>(p)?.iter().map(StudyInstance::from_event));
    }
    if let Some(p) = &config.chains {
        instances.extend(read_records::<EventChain>(p)?.iter().map(StudyInstance::from_chain));
    }
    Ok(instances)
}

/// Builds the study from `config` and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), StudyError> {
    let instances = load_instances(&config)?;
    let study = match &config.store_dir {
        Some(dir) => Study::open(config.study.clone(), instances, dir)?,
        None => Study::new(config.study.clone(), instances)?,
    };
    let app = router(AppState::new(study), config.static_dir.clone());
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|e| StudyError::Config(format!("bind {}: {e}", config.bind)))?;
    eprintln!("annotation service listening on http://{}", config.bind);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| StudyError::Config(e.to_string()))
}
