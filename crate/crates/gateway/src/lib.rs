//! HTTP control surface and WebSocket stream for a livecast engine.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `POST /session/start` | [`StartSession`] | [`SessionHandle`] |
//! | `POST /session/stop` | none | [`SessionHandle`] |
//! | `GET /session` | none | [`SessionHandle`] |
//! | `POST /event` | event JSON, `timestamp` optional | [`InjectReply`] |
//! | `POST /persona/swap` | name, `{"name"}` or persona JSON | [`SessionHandle`] |
//! | `POST /speech/urgent` | [`UrgentSpeech`] | `{"ok": true}` |
//! | `GET /report` | none | run report |
//! | `GET /ws` | WebSocket upgrade | stream frames |
//!
//! Errors are `{"error": message}` with 400 for invalid input, 409 for a
//! request that does not fit the session state.

pub mod error;
pub mod protocol;
pub mod runtime;

use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::{get, post};
use axum::{Json, Router};
use livecast_core::metrics::RunReport;
use serde_json::{json, Value};
use tokio::sync::broadcast;

pub use error::GatewayError;
pub use protocol::{ClockMode, InjectReply, SessionHandle, StartSession, SwapRequest, UrgentSpeech, STREAM_VERSION};
pub use runtime::{Command, EngineHandle, GatewayConfig};

type Shared = Arc<EngineHandle>;

pub fn router(engine: Arc<EngineHandle>) -> Router {
    Router::new()
        .route("/session", get(status))
        .route("/session/start", post(start))
        .route("/session/stop", post(stop))
        .route("/event", post(inject))
        .route("/persona/swap", post(swap))
        .route("/speech/urgent", post(urgent))
        .route("/report", get(report))
        .route("/ws", get(ws))
        .with_state(engine)
}

async fn status(State(e): State<Shared>) -> Result<Json<SessionHandle>, GatewayError> {
    e.call(Command::Status).await.map(Json)
}

async fn start(State(e): State<Shared>, body: Option<Json<StartSession>>) -> Result<Json<SessionHandle>, GatewayError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    e.call(|tx| Command::Start(req, tx)).await.map(Json)
}

async fn stop(State(e): State<Shared>) -> Result<Json<SessionHandle>, GatewayError> {
    e.call(Command::Stop).await.map(Json)
}

async fn inject(State(e): State<Shared>, Json(v): Json<Value>) -> Result<Json<InjectReply>, GatewayError> {
    let accepted = e.call(|tx| Command::Inject(v, tx)).await?;
    Ok(Json(InjectReply { accepted }))
}

async fn swap(State(e): State<Shared>, Json(v): Json<Value>) -> Result<Json<SessionHandle>, GatewayError> {
    let req = SwapRequest::from_value(v);
    e.call(|tx| Command::Swap(req, tx)).await.map(Json)
}

async fn urgent(State(e): State<Shared>, Json(body): Json<UrgentSpeech>) -> Result<Json<Value>, GatewayError> {
    if body.text.trim().is_empty() {
        return Err(GatewayError::BadRequest("urgent speech text is empty".into()));
    }
    e.call(|tx| Command::Urgent(body.text, tx)).await?;
    Ok(Json(json!({ "ok": true })))
}

async fn report(State(e): State<Shared>) -> Result<Json<RunReport>, GatewayError> {
    e.call(Command::Report).await.map(Json)
}

async fn ws(State(e): State<Shared>, upgrade: WebSocketUpgrade) -> Response {
    // subscribe before the upgrade so nothing published after this request is missed
    let rx = e.subscribe();
    upgrade.on_upgrade(move |socket| async move {
        // the greeting reaches this subscriber because it already subscribed
        let _ = e.send(Command::Heartbeat);
        forward(socket, rx).await;
    })
}

/// Next frame for one subscriber: a broadcast frame, or a gap notice when
/// the bounded buffer overflowed and older frames were dropped. `None` once
/// the engine is gone.
pub async fn next_frame(rx: &mut broadcast::Receiver<Arc<str>>) -> Option<Arc<str>> {
    match rx.recv().await {
        Ok(frame) => Some(frame),
        Err(broadcast::error::RecvError::Lagged(missed)) => Some(Arc::from(protocol::gap(missed))),
        Err(broadcast::error::RecvError::Closed) => None,
    }
}

async fn forward(mut socket: WebSocket, mut rx: broadcast::Receiver<Arc<str>>) {
    loop {
        tokio::select! {
            frame = next_frame(&mut rx) => {
                let Some(frame) = frame else { break };
                if socket.send(Message::Text(frame.as_ref().into())).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                // the stream is one-way; pings are answered by the socket layer
                Some(Ok(_)) => {}
            },
        }
    }
}
