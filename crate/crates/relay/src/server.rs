use std::net::SocketAddr;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::connection::Connection;
use crate::hub::{OpenSession, Relay};
use crate::protocol::{Body, ErrorCode, Role, WireMessage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub active_sessions: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub level_id: u8,
    pub config_digest: String,
    pub ended: bool,
}

#[derive(Debug, Deserialize)]
struct WsParams {
    session_id: String,
    role: String,
}

pub fn router(relay: Relay) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/ws", get(ws_upgrade))
        .with_state(relay)
}

/// Serves until the listener fails.
pub async fn serve(relay: Relay, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "relay listening");
    axum::serve(listener, router(relay)).await
}

/// Binds an ephemeral or fixed address and serves in the background.
pub async fn spawn(relay: Relay, addr: SocketAddr) -> std::io::Result<SocketAddr> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router(relay)).await {
            tracing::error!(error = %e, "server stopped");
        }
    });
    Ok(bound)
}

async fn health(State(relay): State<Relay>) -> Json<Health> {
    Json(Health { status: "ok".into(), active_sessions: relay.active_sessions() })
}

fn info(h: &crate::hub::SessionHandle) -> SessionInfo {
    SessionInfo {
        session_id: h.id().to_string(),
        level_id: h.level().level_id,
        config_digest: h.config_digest(),
        ended: h.is_ended(),
    }
}

async fn list_sessions(State(relay): State<Relay>) -> Json<Vec<SessionInfo>> {
    Json(relay.session_ids().iter().filter_map(|id| relay.session(id)).map(|h| info(&h)).collect())
}

async fn create_session(State(relay): State<Relay>, Json(req): Json<OpenSession>) -> Response {
    match relay.open_session(req) {
        Ok(h) => (StatusCode::CREATED, Json(info(&h))).into_response(),
        Err(r) => {
            let status = match r.code {
                ErrorCode::SessionExists => StatusCode::CONFLICT,
                ErrorCode::SessionLimit => StatusCode::SERVICE_UNAVAILABLE,
                ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::BAD_REQUEST,
            };
            (status, Json(serde_json::json!({ "code": r.code, "message": r.message }))).into_response()
        }
    }
}

async fn ws_upgrade(State(relay): State<Relay>, Query(p): Query<WsParams>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| client_loop(relay, p, socket))
}

async fn send(socket: &mut WebSocket, msg: &WireMessage) -> bool {
    let text = serde_json::to_string(msg).expect("serializable");
    socket.send(Message::Text(text.into())).await.is_ok()
}

enum Next {
    Incoming(Option<Result<Message, axum::Error>>),
    Outgoing(Option<WireMessage>),
}

async fn client_loop(relay: Relay, p: WsParams, mut socket: WebSocket) {
    let error = |code, message: String| WireMessage {
        session_id: p.session_id.clone(),
        seq: 0,
        body: Body::Error { code, message, ack_seq: None },
    };
    let role = match p.role.parse::<Role>() {
        Ok(r) => r,
        Err(m) => {
            send(&mut socket, &error(ErrorCode::RoleMismatch, m)).await;
            return;
        }
    };
    let mut conn = match Connection::open(relay, &p.session_id, role).await {
        Ok(c) => c,
        Err(r) => {
            send(&mut socket, &error(r.code, r.message)).await;
            return;
        }
    };
    tracing::debug!(session = %p.session_id, ?role, "client connected");
    loop {
        let next = tokio::select! {
            m = socket.recv() => Next::Incoming(m),
            f = conn.next_frame() => Next::Outgoing(f),
        };
        match next {
            Next::Incoming(Some(Ok(Message::Text(text)))) => {
                for reply in conn.handle_text(text.as_str()).await {
                    if !send(&mut socket, &reply).await {
                        return;
                    }
                }
            }
            Next::Incoming(Some(Ok(Message::Binary(_)))) => {
                let e = error(ErrorCode::Protocol, "binary frames are not supported".into());
                if !send(&mut socket, &e).await {
                    return;
                }
            }
            Next::Incoming(Some(Ok(Message::Close(_)))) | Next::Incoming(None) | Next::Incoming(Some(Err(_))) => break,
            Next::Incoming(Some(Ok(_))) => {}
            Next::Outgoing(Some(msg)) => {
                if !send(&mut socket, &msg).await {
                    break;
                }
            }
            Next::Outgoing(None) => break,
        }
    }
    tracing::debug!(session = %p.session_id, ?role, "client disconnected");
}
