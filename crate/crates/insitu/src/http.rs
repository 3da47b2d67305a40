//! The `/v1` JSON API.

use std::net::SocketAddr;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use insitu_core::dom_model::DomSnapshot;
use insitu_core::engine::{AssistRequest, Engine, EngineError, FeedbackRequest};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

/// Snapshots of large pages easily exceed axum's 2 MB default.
const BODY_LIMIT: usize = 32 * 1024 * 1024;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitRequest {
    pub snapshot: DomSnapshot,
    /// Override the snapshot's own url and title.
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
}

pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: json!({"error": {"kind": "BadRequest", "message": message.into()}}),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = StatusCode::from_u16(e.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let mut body = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
        if let EngineError::NoAssistanceAvailable { diagnostics, .. } = &e {
            body["error"]["diagnostics"] = serde_json::to_value(diagnostics).unwrap_or_default();
        }
        if status.is_server_error() {
            log::error!("{e}");
        }
        Self { status, body }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// Parses the body ourselves so malformed input gets the same error shape
/// as every other failure.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

/// Engine calls block on providers and file IO.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, EngineError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: json!({"error": {"kind": "Internal", "message": e.to_string()}}),
        }),
    }
}

async fn init(State(engine): State<Engine>, body: Bytes) -> Result<Response, ApiError> {
    let req: InitRequest = parse(&body)?;
    let mut snapshot = req.snapshot;
    if let Some(url) = req.url {
        snapshot.url = url;
    }
    if let Some(title) = req.title {
        snapshot.title = title;
    }
    let resp = blocking(move || engine.init_interface(&snapshot)).await?;
    Ok((StatusCode::ACCEPTED, Json(resp)).into_response())
}

async fn status(State(engine): State<Engine>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let resp = engine.status(&id)?;
    Ok(Json(resp).into_response())
}

async fn export(State(engine): State<Engine>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let text = blocking(move || engine.export_handbook(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn assist(State(engine): State<Engine>, body: Bytes) -> Result<Response, ApiError> {
    let req: AssistRequest = parse(&body)?;
    let resp = blocking(move || engine.assist(&req)).await?;
    Ok(Json(resp).into_response())
}

async fn feedback(State(engine): State<Engine>, body: Bytes) -> Result<Response, ApiError> {
    let req: FeedbackRequest = parse(&body)?;
    let resp = blocking(move || engine.feedback(&req)).await?;
    Ok(Json(resp).into_response())
}

pub fn router(engine: Engine) -> Router {
    Router::new()
        .route("/v1/interfaces", post(init))
        .route("/v1/interfaces/{id}", get(status))
        .route("/v1/interfaces/{id}/handbook", get(export))
        .route("/v1/assist", post(assist))
        .route("/v1/feedback", post(feedback))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(engine)
}

pub async fn serve(engine: Engine, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
