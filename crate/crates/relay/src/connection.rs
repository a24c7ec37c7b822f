//! One client connection, independent of transport. The WebSocket handler
//! feeds it text frames; tests can drive it directly.

use std::collections::VecDeque;

use calmplay_core::HrSample;
use tokio::sync::broadcast::{self, error::RecvError};

use crate::hub::{Frame, OpenSession, Rejection, Relay, SessionHandle};
use crate::protocol::{parse_frame, Body, ErrorCode, Role, WireMessage};

pub struct Connection {
    relay: Relay,
    session_id: String,
    role: Role,
    session: Option<SessionHandle>,
    frames: Option<broadcast::Receiver<Frame>>,
    backlog: VecDeque<WireMessage>,
    last_seq: Option<u64>,
    out_seq: u64,
    lagged: u64,
}

impl Connection {
    /// Joins an existing session. A player may also connect before the
    /// session exists and open it with `session_start`.
    pub async fn open(relay: Relay, session_id: &str, role: Role) -> Result<Self, Rejection> {
        let mut conn = Self {
            relay: relay.clone(),
            session_id: session_id.to_string(),
            role,
            session: None,
            frames: None,
            backlog: VecDeque::new(),
            last_seq: None,
            out_seq: 0,
            lagged: 0,
        };
        match relay.session(session_id) {
            Some(handle) => conn.attach(handle).await?,
            None if role == Role::Player => {}
            None => return Err(Rejection::new(ErrorCode::NoSession, format!("no session {session_id}"))),
        }
        Ok(conn)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn session(&self) -> Option<&SessionHandle> {
        self.session.as_ref()
    }

    /// Frames this connection missed because it fell behind.
    pub fn lagged(&self) -> u64 {
        self.lagged
    }

    async fn attach(&mut self, handle: SessionHandle) -> Result<(), Rejection> {
        let att = handle.attach(self.role).await?;
        self.backlog.extend(att.latest.iter().map(|m| (**m).clone()));
        self.frames = Some(att.frames);
        self.session = Some(handle);
        Ok(())
    }

    fn reply(&mut self, body: Body) -> WireMessage {
        self.out_seq += 1;
        WireMessage { session_id: self.session_id.clone(), seq: self.out_seq, body }
    }

    fn error(&mut self, r: Rejection, ack_seq: Option<u64>) -> WireMessage {
        self.reply(Body::Error { code: r.code, message: r.message, ack_seq })
    }

    /// Handles one raw text frame and returns the direct replies.
    pub async fn handle_text(&mut self, text: &str) -> Vec<WireMessage> {
        match parse_frame(text) {
            Ok(msg) => self.handle(msg).await,
            Err((code, message)) => vec![self.error(Rejection { code, message }, None)],
        }
    }

    pub async fn handle(&mut self, msg: WireMessage) -> Vec<WireMessage> {
        let seq = msg.seq;
        if msg.session_id != self.session_id {
            let r = Rejection::new(ErrorCode::Protocol, format!("connection is bound to session {}", self.session_id));
            return vec![self.error(r, Some(seq))];
        }
        let allowed = matches!(
            (self.role, &msg.body),
            (Role::Sensor, Body::Hr { .. })
                | (Role::Player, Body::Input { .. } | Body::SessionStart { .. } | Body::Questionnaire { .. })
        );
        if !allowed {
            let r = Rejection::new(
                ErrorCode::RoleMismatch,
                format!("{:?} may not send {}", self.role, msg.body.type_name()).to_lowercase(),
            );
            return vec![self.error(r, Some(seq))];
        }
        if self.last_seq.is_some_and(|last| seq <= last) {
            return vec![self.reply(Body::Ack { ack_seq: seq, dropped: Some("stale sequence".into()) })];
        }
        self.last_seq = Some(seq);

        let result = match msg.body {
            Body::SessionStart { level, seed, config, config_digest } => {
                return self.start(seq, level, seed, config, config_digest).await;
            }
            body => match self.session.clone() {
                None => Err(Rejection::new(ErrorCode::NoSession, "send session_start first")),
                Some(h) => match body {
                    Body::Hr { ts, bpm } => {
                        h.hr(HrSample::new(ts, bpm, format!("{:?}", self.role).to_lowercase())).await
                    }
                    Body::Input { flap, .. } => h.input(flap).await.map(|_| None),
                    Body::Questionnaire { instrument, items } => h.questionnaire(instrument, items).await.map(|_| None),
                    _ => unreachable!("filtered by role check"),
                },
            },
        };
        match result {
            Ok(dropped) => vec![self.reply(Body::Ack { ack_seq: seq, dropped })],
            Err(r) => vec![self.error(r, Some(seq))],
        }
    }

    async fn start(
        &mut self,
        seq: u64,
        level: calmplay_core::LevelSpec,
        seed: u64,
        config: Option<calmplay_core::GameConfig>,
        config_digest: Option<String>,
    ) -> Vec<WireMessage> {
        if self.session.is_some() {
            let r = Rejection::new(ErrorCode::SessionExists, format!("session {} already exists", self.session_id));
            return vec![self.error(r, Some(seq))];
        }
        let req = OpenSession {
            session_id: Some(self.session_id.clone()),
            level,
            seed: Some(seed),
            config: config.clone(),
            participant: None,
            ordinal: None,
        };
        let handle = match self.relay.open_session(req) {
            Ok(h) => h,
            Err(r) => return vec![self.error(r, Some(seq))],
        };
        if let Some(d) = config_digest {
            if d != handle.config_digest() {
                tracing::warn!(client = %d, server = %handle.config_digest(), "config digest mismatch");
            }
        }
        if let Err(r) = self.attach(handle.clone()).await {
            return vec![self.error(r, Some(seq))];
        }
        let confirm = self.reply(Body::SessionStart {
            level,
            seed,
            config: Some(config.unwrap_or_else(|| self.relay.config().game.clone())),
            config_digest: Some(handle.config_digest()),
        });
        vec![self.reply(Body::Ack { ack_seq: seq, dropped: None }), confirm]
    }

    /// Next broadcast message for this connection; `None` once the session task is gone.
    /// Waits indefinitely while a player has not started a session yet.
    pub async fn next_frame(&mut self) -> Option<WireMessage> {
        if let Some(m) = self.backlog.pop_front() {
            return Some(m);
        }
        let Some(rx) = self.frames.as_mut() else {
            return std::future::pending().await;
        };
        loop {
            match rx.recv().await {
                Ok(m) => return Some((*m).clone()),
                Err(RecvError::Lagged(n)) => self.lagged += n,
                Err(RecvError::Closed) => return None,
            }
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(h) = &self.session {
            h.detach(self.role);
        }
    }
}
