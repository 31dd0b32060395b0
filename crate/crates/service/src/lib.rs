//! HTTP annotation service.
//!
//! Participants open a session with an opaque token, answer the practice
//! questions (seeing each reference label afterwards), pass or fail the
//! quality gate, then label their batch. Every accepted answer is fsynced to
//! the event log before it is acknowledged.

pub mod error;
pub mod eventlog;
pub mod state;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

pub use error::ServiceError;
pub use state::{load_study_dir, Service, SessionState, Study};

use state::Submission;

type Shared = Arc<Service>;

/// Run blocking registry work (it may fsync) off the async workers.
async fn blocking<T, F>(svc: Shared, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ServiceError::Study(format!("worker failed: {e}")))?
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    study_id: String,
    participant_token: String,
}

async fn create_session(
    State(svc): State<Shared>,
    Json(body): Json<CreateSession>,
) -> Result<impl IntoResponse, ServiceError> {
    let info = blocking(svc, move |s| s.create_session(&body.study_id, &body.participant_token)).await?;
    let status = if info.resumed { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(info)))
}

async fn next_item(State(svc): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(blocking(svc, move |s| s.next(&id)).await?))
}

async fn submit(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Json(body): Json<Submission>,
) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(blocking(svc, move |s| s.submit(&id, body)).await?))
}

#[derive(Deserialize)]
struct StudyQuery {
    study_id: Option<String>,
}

async fn export(State(svc): State<Shared>, Query(q): Query<StudyQuery>) -> Result<impl IntoResponse, ServiceError> {
    let study_id = q
        .study_id
        .ok_or_else(|| ServiceError::Unprocessable("study_id query parameter is required".into()))?;
    let body = blocking(svc, move |s| s.export(&study_id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body))
}

async fn progress(State(svc): State<Shared>, Query(q): Query<StudyQuery>) -> Result<impl IntoResponse, ServiceError> {
    let studies = blocking(svc, move |s| s.progress(q.study_id.as_deref())).await?;
    Ok(Json(json!({ "studies": studies })))
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/next", get(next_item))
        .route("/api/sessions/{id}/responses", post(submit))
        .route("/api/admin/export", get(export))
        .route("/api/admin/progress", get(progress))
        .with_state(service)
}

/// Serve until ctrl-c.
pub async fn serve(addr: SocketAddr, service: Shared) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
