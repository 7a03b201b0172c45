//! HTTP API and the `/events` WebSocket stream.

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;
use tracing::debug;

use crate::error::Error;

use super::service::{DispatchRequest, Orchestrator};

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

fn error_kind(e: &Error) -> (StatusCode, &'static str) {
    use StatusCode as S;
    match e {
        Error::EmptyKeywords => (S::UNPROCESSABLE_ENTITY, "empty_keywords"),
        Error::MalformedMessage(_) | Error::MissingField(_) => (S::UNPROCESSABLE_ENTITY, "malformed"),
        Error::BadModality(_) => (S::UNPROCESSABLE_ENTITY, "bad_modality"),
        Error::BadSelection(_) => (S::UNPROCESSABLE_ENTITY, "bad_selection"),
        Error::MissingTeleopKey => (S::UNPROCESSABLE_ENTITY, "missing_teleop_key"),
        Error::UnknownKey(_) => (S::UNPROCESSABLE_ENTITY, "unknown_key"),
        Error::UnknownRobot(_) => (S::UNPROCESSABLE_ENTITY, "unknown_robot"),
        Error::UnknownSession(_) => (S::NOT_FOUND, "unknown_session"),
        Error::InvalidState { .. } => (S::CONFLICT, "invalid_state"),
        Error::NotConnected | Error::Broker(_) => (S::SERVICE_UNAVAILABLE, "bus_unavailable"),
        _ => (S::INTERNAL_SERVER_ERROR, "internal"),
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = error_kind(&self.0);
        (status, Json(json!({ "error": kind, "message": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TextBody {
    text: String,
}

#[derive(Debug, Deserialize)]
struct EventFilter {
    session: Option<String>,
}

pub fn router(orch: Orchestrator) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/keywords", post(submit_keywords))
        .route("/sessions/{id}/dispatch", post(dispatch))
        .route("/sessions/{id}/comment", post(comment))
        .route("/logs/published", get(published))
        .route("/logs/received", get(received))
        .route("/analytics", get(analytics))
        .route("/robots", get(robots))
        .route("/events", get(events))
        .with_state(orch)
}

/// Serves the API until `shutdown` resolves.
pub async fn serve(
    orch: Orchestrator,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(orch))
        .with_graceful_shutdown(shutdown)
        .await
}

async fn create_session(State(o): State<Orchestrator>) -> impl IntoResponse {
    (StatusCode::CREATED, Json(o.create_session()))
}

async fn get_session(State(o): State<Orchestrator>, Path(id): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(o.session(&id).await?))
}

async fn submit_keywords(
    State(o): State<Orchestrator>,
    Path(id): Path<String>,
    Json(body): Json<TextBody>,
) -> ApiResult<impl serde::Serialize> {
    Ok(Json(o.submit_keywords(&id, &body.text).await?))
}

async fn dispatch(
    State(o): State<Orchestrator>,
    Path(id): Path<String>,
    Json(req): Json<DispatchRequest>,
) -> ApiResult<impl serde::Serialize> {
    Ok(Json(o.dispatch(&id, req).await?))
}

async fn comment(
    State(o): State<Orchestrator>,
    Path(id): Path<String>,
    Json(body): Json<TextBody>,
) -> ApiResult<impl serde::Serialize> {
    Ok(Json(o.submit_comment(&id, &body.text).await?))
}

async fn published(State(o): State<Orchestrator>) -> impl IntoResponse {
    Json(o.published_log())
}

async fn received(State(o): State<Orchestrator>) -> impl IntoResponse {
    Json(o.received_log())
}

async fn analytics(State(o): State<Orchestrator>) -> impl IntoResponse {
    Json(o.analytics())
}

async fn robots(State(o): State<Orchestrator>) -> impl IntoResponse {
    Json(o.robots())
}

async fn events(
    State(o): State<Orchestrator>,
    Query(filter): Query<EventFilter>,
    ws: WebSocketUpgrade,
) -> Response {
    ws.on_upgrade(move |socket| stream_events(o, socket, filter.session))
}

/// Forwards events as JSON text messages. With a session filter, events
/// scoped to other sessions are skipped; global events always pass.
async fn stream_events(o: Orchestrator, mut socket: WebSocket, session: Option<String>) {
    let mut rx = o.subscribe_events();
    loop {
        tokio::select! {
            event = rx.recv() => {
                let event = match event {
                    Ok(e) => e,
                    Err(RecvError::Lagged(n)) => {
                        let note = json!({ "type": "lagged", "skipped": n }).to_string();
                        if socket.send(Message::Text(note.into())).await.is_err() {
                            break;
                        }
                        continue;
                    }
                    Err(RecvError::Closed) => break,
                };
                if let (Some(want), Some(got)) = (&session, event.session_id()) {
                    if want != got {
                        continue;
                    }
                }
                let text = serde_json::to_string(&event).expect("events serialize");
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    debug!("event stream closed");
}
