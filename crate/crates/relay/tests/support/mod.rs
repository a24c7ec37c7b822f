#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use calmplay_core::GameConfig;
use calmplay_relay::{Body, StateFrame, WireMessage};
use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

/// Flaps when the bird is predicted to sink below the next gap centre.
pub fn frame_bot(f: &StateFrame, cfg: &GameConfig) -> bool {
    let target = f
        .pillars
        .iter()
        .filter(|p| p.x + cfg.pillar_width > f.bird_x - cfg.bird_size / 2.0)
        .min_by_key(|p| p.index)
        .map_or(cfg.world_height / 2.0, |p| p.gap_center_y);
    let dt = cfg.dt();
    let vy = f.bird_vy + cfg.gravity * dt;
    f.bird_y + vy * dt > target
}

pub struct WsClient {
    pub session_id: String,
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    seq: u64,
}

impl WsClient {
    pub async fn connect(addr: SocketAddr, session_id: &str, role: &str) -> Self {
        let url = format!("ws://{addr}/ws?session_id={session_id}&role={role}");
        let (ws, _) = connect_async(url).await.expect("websocket connect");
        Self { session_id: session_id.to_string(), ws, seq: 0 }
    }

    pub async fn send(&mut self, body: Body) -> u64 {
        self.seq += 1;
        let msg = WireMessage { session_id: self.session_id.clone(), seq: self.seq, body };
        self.send_raw(&serde_json::to_string(&msg).unwrap()).await;
        self.seq
    }

    pub async fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::Text(text.to_string().into())).await.expect("send");
    }

    pub async fn recv(&mut self) -> Option<WireMessage> {
        match tokio::time::timeout(Duration::from_secs(5), self.ws.next()).await {
            Ok(Some(Ok(Message::Text(t)))) => Some(serde_json::from_str(t.as_str()).expect("valid wire message")),
            Ok(Some(Ok(_))) => Box::pin(self.recv()).await,
            _ => None,
        }
    }

    /// Skips messages until one matches.
    pub async fn recv_until(&mut self, mut pred: impl FnMut(&WireMessage) -> bool) -> WireMessage {
        loop {
            let m = self.recv().await.expect("message before timeout");
            if pred(&m) {
                return m;
            }
        }
    }

    pub async fn close(mut self) {
        let _ = self.ws.close(None).await;
    }
}

pub async fn http(addr: SocketAddr, method: &str, path: &str, body: Option<&str>) -> (u16, String) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let body = body.unwrap_or("");
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    );
    s.write_all(req.as_bytes()).await.unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).await.unwrap();
    let status = out.split_whitespace().nth(1).unwrap().parse().unwrap();
    let body = out.split("\r\n\r\n").nth(1).unwrap_or("").to_string();
    (status, body)
}
