//! JSON-over-HTTP access to a [`SessionManager`].
//!
//! Every endpoint is a `POST` taking and returning a JSON object:
//!
//! | path      | request                                         | response                                       |
//! |-----------|-------------------------------------------------|------------------------------------------------|
//! | `/create` | `{config_ref}`                                  | `{session_id}`                                 |
//! | `/next`   | `{session_id}`                                  | `{query_id, kind, items: [{id, display}], set_size}` |
//! | `/answer` | `{session_id, query_id, payload, elapsed_ms}`   | `{status, interactions, log_det_sigma}`        |
//! | `/stop`   | `{session_id}`                                  | `{status, interactions, log_det_sigma}`        |
//!
//! Failures come back as `{error, message}` with a 4xx/5xx status.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use richq_core::session::{AnswerSummary, QueryView, SessionManager};
use richq_core::Error;

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub config_ref: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
}

#[derive(Debug, Deserialize)]
pub struct SessionRequest {
    pub session_id: String,
}

#[derive(Debug, Deserialize)]
pub struct AnswerRequest {
    pub session_id: String,
    pub query_id: String,
    pub payload: serde_json::Value,
    pub elapsed_ms: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: error.into(), message: message.into() } }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, tag) = match &e {
            Error::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            Error::SessionStopped(_) => (StatusCode::CONFLICT, "session_stopped"),
            Error::Protocol(_) => (StatusCode::CONFLICT, "protocol"),
            Error::Config { .. } => (StatusCode::BAD_REQUEST, "config"),
            Error::KindMismatch(_) | Error::InvalidResponse(_) | Error::InvalidArgument(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_response")
            }
            Error::Io { .. } => (StatusCode::BAD_REQUEST, "config"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, tag, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

// Query planning is CPU bound, so session calls run off the async workers.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> richq_core::Result<T> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json).map_err(ApiError::from),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

async fn create(
    State(m): State<Arc<SessionManager>>,
    req: Result<Json<CreateRequest>, JsonRejection>,
) -> ApiResult<CreateResponse> {
    let Json(req) = req?;
    blocking(move || m.create(&req.config_ref).map(|session_id| CreateResponse { session_id })).await
}

async fn next(
    State(m): State<Arc<SessionManager>>,
    req: Result<Json<SessionRequest>, JsonRejection>,
) -> ApiResult<QueryView> {
    let Json(req) = req?;
    blocking(move || m.next_query(&req.session_id)).await
}

async fn answer(
    State(m): State<Arc<SessionManager>>,
    req: Result<Json<AnswerRequest>, JsonRejection>,
) -> ApiResult<AnswerSummary> {
    let Json(req) = req?;
    blocking(move || m.submit_response(&req.session_id, &req.query_id, &req.payload, req.elapsed_ms)).await
}

async fn stop(
    State(m): State<Arc<SessionManager>>,
    req: Result<Json<SessionRequest>, JsonRejection>,
) -> ApiResult<AnswerSummary> {
    let Json(req) = req?;
    blocking(move || m.stop(&req.session_id)).await
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/create", post(create))
        .route("/next", post(next))
        .route("/answer", post(answer))
        .route("/stop", post(stop))
        .with_state(manager)
}

/// Serves `manager` on `addr` until the process is interrupted.
pub async fn serve(addr: SocketAddr, manager: Arc<SessionManager>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(manager)).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
