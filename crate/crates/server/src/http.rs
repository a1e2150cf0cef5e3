use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use crate::hub::Hub;
use crate::protocol::{ClientEvent, Outbound};
use crate::{HubError, ServerError};

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/api/join", post(join))
        .route("/api/feedback", post(feedback))
        .route("/api/admin/export", get(export))
        .route("/api/health", get(health))
        .route("/api/ws", get(ws))
        .with_state(hub)
}

impl IntoResponse for HubError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            HubError::ConsentRequired => (StatusCode::BAD_REQUEST, "consent_required"),
            HubError::UnknownToken => (StatusCode::UNAUTHORIZED, "unknown_token"),
            HubError::Forbidden => (StatusCode::FORBIDDEN, "forbidden"),
            HubError::Generation(_) | HubError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (status, Json(json!({"error": code, "message": self.to_string()}))).into_response()
    }
}

#[derive(Deserialize)]
struct JoinRequest {
    consent: bool,
}

async fn join(State(hub): State<Arc<Hub>>, Json(req): Json<JoinRequest>) -> Result<Response, HubError> {
    let out = hub.join(req.consent)?;
    Ok(Json(out).into_response())
}

#[derive(Deserialize)]
struct FeedbackRequest {
    token: String,
    text: String,
    #[serde(default)]
    took_notes: bool,
}

async fn feedback(State(hub): State<Arc<Hub>>, Json(req): Json<FeedbackRequest>) -> Result<Response, HubError> {
    hub.submit_feedback(&req.token, &req.text, req.took_notes)?;
    Ok(Json(json!({"ok": true})).into_response())
}

async fn export(State(hub): State<Arc<Hub>>, headers: HeaderMap) -> Result<Response, HubError> {
    let bearer = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    let bytes = hub.export(bearer).await?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/x-tar"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"colex-export.tar\""),
        ],
        bytes,
    )
        .into_response())
}

async fn health(State(hub): State<Arc<Hub>>) -> Response {
    Json(hub.health().await).into_response()
}

#[derive(Deserialize)]
struct WsQuery {
    token: String,
}

async fn ws(State(hub): State<Arc<Hub>>, Query(q): Query<WsQuery>, upgrade: WebSocketUpgrade) -> Response {
    if !hub.knows(&q.token) {
        return HubError::UnknownToken.into_response();
    }
    upgrade.on_upgrade(move |socket| run_socket(hub, q.token, socket))
}

async fn run_socket(hub: Arc<Hub>, token: String, mut socket: WebSocket) {
    let (tx, mut rx) = mpsc::unbounded_channel::<Outbound>();
    if hub.connect(&token, tx.clone()).await.is_err() {
        return;
    }
    let mut seq = 0u64;
    loop {
        tokio::select! {
            out = rx.recv() => {
                let Some(out) = out else { break };
                seq += 1;
                let text = serde_json::to_string(&out.stamp(seq)).expect("envelope serializes");
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => match ClientEvent::parse(&text) {
                    Ok(ev) => {
                        if hub.handle(&token, ev).await.is_err() {
                            break;
                        }
                    }
                    Err(msg) => {
                        let _ = tx.send(Outbound::error(0, "bad_message", msg));
                    }
                },
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
        }
    }
    hub.disconnect(&token, &tx).await;
}

/// A server running on a background task.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub hub: Arc<Hub>,
    pub handle: JoinHandle<()>,
}

/// Binds the configured address and serves until the task is dropped. A
/// sweeper closes idle dyads once a second.
pub async fn spawn(hub: Arc<Hub>) -> Result<RunningServer, ServerError> {
    let cfg = hub.config();
    let listener = tokio::net::TcpListener::bind((cfg.bind.as_str(), cfg.port)).await?;
    let addr = listener.local_addr()?;
    let app = router(Arc::clone(&hub));
    let sweeper = Arc::clone(&hub);
    let handle = tokio::spawn(async move {
        let sweep = tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(1));
            loop {
                tick.tick().await;
                sweeper.dropout_sweep(Instant::now()).await;
            }
        });
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("server stopped: {e}");
        }
        sweep.abort();
    });
    tracing::info!(%addr, "listening");
    Ok(RunningServer { addr, hub, handle })
}

/// Serves until the process is stopped.
pub async fn serve(hub: Arc<Hub>) -> Result<(), ServerError> {
    let running = spawn(hub).await?;
    running.handle.await.map_err(|e| ServerError::Io(std::io::Error::other(e)))
}
