//! Session registry and the per-session tick task.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use calmplay_core::session::SessionWriter;
use calmplay_core::{
    AdaptError, EndReason, GameConfig, HrSample, LevelSpec, LiveSession, Phase, SessionError,
    SessionHeader, SessionRecord, TickInput,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::MissedTickBehavior;

use crate::protocol::{
    validate_questionnaire, Body, ErrorCode, Instrument, QuestionnaireItem, Role, StateFrame, WireMessage,
};

/// Flaps queued beyond this are dropped; the player cannot bank inputs.
const MAX_PENDING_FLAPS: u32 = 2;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{message}")]
pub struct Rejection {
    pub code: ErrorCode,
    pub message: String,
}

impl Rejection {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

#[derive(Debug, Clone)]
pub struct RelayConfig {
    pub game: GameConfig,
    pub log_dir: Option<PathBuf>,
    pub max_sessions: usize,
    /// fsync every log line.
    pub durable: bool,
    /// Frames buffered per subscriber before the oldest are dropped.
    pub frame_buffer: usize,
}

impl Default for RelayConfig {
    fn default() -> Self {
        Self { game: GameConfig::default(), log_dir: None, max_sessions: 16, durable: false, frame_buffer: 256 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpenSession {
    #[serde(default)]
    pub session_id: Option<String>,
    pub level: LevelSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config: Option<GameConfig>,
    #[serde(default)]
    pub participant: Option<String>,
    #[serde(default)]
    pub ordinal: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredQuestionnaire {
    pub session_id: String,
    pub participant: Option<String>,
    pub instrument: Instrument,
    pub items: Vec<QuestionnaireItem>,
}

pub(crate) type Frame = Arc<WireMessage>;

pub(crate) struct Attachment {
    pub frames: broadcast::Receiver<Frame>,
    /// Latest state frame, then the end notice if the session is over.
    pub latest: Vec<Frame>,
}

enum Command {
    Attach { role: Role, reply: oneshot::Sender<Result<Attachment, Rejection>> },
    Detach { role: Role },
    Hr { sample: HrSample, reply: oneshot::Sender<Result<Option<String>, Rejection>> },
    Input { flap: bool, reply: oneshot::Sender<Result<(), Rejection>> },
    Questionnaire { instrument: Instrument, items: Vec<QuestionnaireItem>, reply: oneshot::Sender<Result<(), Rejection>> },
    Record { reply: oneshot::Sender<SessionRecord> },
    Questionnaires { reply: oneshot::Sender<Vec<StoredQuestionnaire>> },
}

#[derive(Debug, Clone)]
pub struct SessionHandle {
    id: String,
    level: LevelSpec,
    config_digest: u64,
    cmd: mpsc::UnboundedSender<Command>,
    ended: Arc<AtomicBool>,
}

impl SessionHandle {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn level(&self) -> LevelSpec {
        self.level
    }

    pub fn config_digest(&self) -> String {
        format!("{:016x}", self.config_digest)
    }

    pub fn is_ended(&self) -> bool {
        self.ended.load(Ordering::Acquire)
    }

    async fn call<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, Rejection> {
        let (tx, rx) = oneshot::channel();
        self.cmd.send(make(tx)).map_err(|_| gone())?;
        rx.await.map_err(|_| gone())
    }

    pub(crate) async fn attach(&self, role: Role) -> Result<Attachment, Rejection> {
        self.call(|reply| Command::Attach { role, reply }).await?
    }

    pub(crate) fn detach(&self, role: Role) {
        let _ = self.cmd.send(Command::Detach { role });
    }

    /// `Ok(Some(reason))` means the sample was received but dropped.
    pub async fn hr(&self, sample: HrSample) -> Result<Option<String>, Rejection> {
        self.call(|reply| Command::Hr { sample, reply }).await?
    }

    pub async fn input(&self, flap: bool) -> Result<(), Rejection> {
        self.call(|reply| Command::Input { flap, reply }).await?
    }

    pub async fn questionnaire(&self, instrument: Instrument, items: Vec<QuestionnaireItem>) -> Result<(), Rejection> {
        self.call(|reply| Command::Questionnaire { instrument, items, reply }).await?
    }

    /// The session log as written so far.
    pub async fn record(&self) -> Result<SessionRecord, Rejection> {
        self.call(|reply| Command::Record { reply }).await
    }

    pub async fn questionnaires(&self) -> Result<Vec<StoredQuestionnaire>, Rejection> {
        self.call(|reply| Command::Questionnaires { reply }).await
    }
}

fn gone() -> Rejection {
    Rejection::new(ErrorCode::Internal, "session task stopped")
}

struct Shared {
    config: RelayConfig,
    sessions: Mutex<HashMap<String, SessionHandle>>,
    counter: AtomicU64,
}

/// Holds all sessions. Cheap to clone.
#[derive(Clone)]
pub struct Relay {
    shared: Arc<Shared>,
}

pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl Relay {
    pub fn new(config: RelayConfig) -> Result<Self, calmplay_core::GameError> {
        config.game.validate()?;
        Ok(Self {
            shared: Arc::new(Shared { config, sessions: Mutex::new(HashMap::new()), counter: AtomicU64::new(0) }),
        })
    }

    pub fn config(&self) -> &RelayConfig {
        &self.shared.config
    }

    pub fn active_sessions(&self) -> usize {
        self.shared.sessions.lock().unwrap().values().filter(|h| !h.is_ended()).count()
    }

    pub fn session(&self, id: &str) -> Option<SessionHandle> {
        self.shared.sessions.lock().unwrap().get(id).cloned()
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self.shared.sessions.lock().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Creates a session and starts its task. Must be called inside a tokio runtime.
    pub fn open_session(&self, req: OpenSession) -> Result<SessionHandle, Rejection> {
        let n = self.shared.counter.fetch_add(1, Ordering::Relaxed);
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        let id = req.session_id.clone().unwrap_or_else(|| format!("s{now:x}-{n}"));
        if !valid_session_id(&id) {
            return Err(Rejection::new(ErrorCode::Protocol, format!("invalid session id {id:?}")));
        }
        let config = req.config.clone().unwrap_or_else(|| self.shared.config.game.clone());
        let config_digest = config.digest();
        config.validate().map_err(|e| Rejection::new(ErrorCode::Protocol, e.to_string()))?;
        req.level.validate().map_err(|e| Rejection::new(ErrorCode::Protocol, e.to_string()))?;

        let mut sessions = self.shared.sessions.lock().unwrap();
        if sessions.contains_key(&id) {
            return Err(Rejection::new(ErrorCode::SessionExists, format!("session {id} already exists")));
        }
        let active = sessions.values().filter(|h| !h.is_ended()).count();
        if active >= self.shared.config.max_sessions {
            return Err(Rejection::new(
                ErrorCode::SessionLimit,
                format!("{active} sessions active, limit {}", self.shared.config.max_sessions),
            ));
        }

        let mut header = SessionHeader::new(&id, req.level, config, req.seed.unwrap_or(now ^ n));
        header.participant = req.participant;
        header.ordinal = req.ordinal;
        let writer = match &self.shared.config.log_dir {
            Some(dir) => SessionWriter::create(header, &dir.join(format!("{id}.jsonl")), self.shared.config.durable)
                .map_err(|e| Rejection::new(ErrorCode::Internal, e.to_string()))?,
            None => SessionWriter::in_memory(header),
        };
        let live = LiveSession::new(writer).map_err(|e| Rejection::new(ErrorCode::Internal, e.to_string()))?;

        let (tx, rx) = mpsc::unbounded_channel();
        let ended = Arc::new(AtomicBool::new(false));
        let handle = SessionHandle { id: id.clone(), level: req.level, config_digest, cmd: tx, ended: ended.clone() };
        let (frames, _) = broadcast::channel(self.shared.config.frame_buffer.max(1));
        let task = SessionTask {
            live,
            frames,
            latest: None,
            end: None,
            seq: 0,
            running: false,
            pending_flaps: 0,
            player_attached: false,
            ended,
            questionnaires: Vec::new(),
            questionnaire_path: self.shared.config.log_dir.as_ref().map(|d| d.join(format!("{id}.questionnaires.jsonl"))),
        };
        tokio::spawn(task.run(rx));
        sessions.insert(id, handle.clone());
        Ok(handle)
    }
}

struct SessionTask {
    live: LiveSession,
    frames: broadcast::Sender<Frame>,
    latest: Option<Frame>,
    end: Option<Frame>,
    seq: u64,
    running: bool,
    pending_flaps: u32,
    player_attached: bool,
    ended: Arc<AtomicBool>,
    questionnaires: Vec<StoredQuestionnaire>,
    questionnaire_path: Option<PathBuf>,
}

impl SessionTask {
    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Command>) {
        let period = Duration::from_secs_f64(self.live.state().config.dt());
        let mut ticker = tokio::time::interval(period);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);
        self.publish_state();
        loop {
            tokio::select! {
                cmd = rx.recv() => match cmd {
                    Some(cmd) => {
                        let was_running = self.running;
                        self.handle(cmd);
                        if self.running && !was_running {
                            ticker.reset_immediately();
                        }
                    }
                    None => break,
                },
                _ = ticker.tick(), if self.running => self.step(),
            }
        }
        if !self.live.is_ended() {
            self.finish_abort();
        }
    }

    fn emit(&mut self, body: Body) -> Frame {
        self.seq += 1;
        Arc::new(WireMessage { session_id: self.live.record().header.session_id.clone(), seq: self.seq, body })
    }

    fn publish_state(&mut self) {
        let level = self.live.level();
        let frame = StateFrame::from_state(self.live.state(), &level, self.live.controller().threshold_bpm());
        let msg = self.emit(Body::State(frame));
        self.latest = Some(msg.clone());
        let _ = self.frames.send(msg);
    }

    fn publish_end(&mut self) {
        self.running = false;
        self.ended.store(true, Ordering::Release);
        let s = self.live.state();
        let body = Body::SessionEnd {
            reason: s.end_reason().unwrap_or(EndReason::Aborted),
            duration_s: s.elapsed,
            final_score: s.score,
        };
        let reason = s.end_reason();
        let msg = self.emit(body);
        self.end = Some(msg.clone());
        let _ = self.frames.send(msg);
        tracing::info!(session = %self.live.record().header.session_id, ?reason, "session ended");
    }

    fn step(&mut self) {
        let flap = self.pending_flaps > 0;
        self.pending_flaps = self.pending_flaps.saturating_sub(1);
        if let Err(e) = self.live.tick(TickInput { flap }) {
            tracing::error!(error = %e, "tick failed");
            self.finish_abort();
            return;
        }
        self.publish_state();
        if self.live.is_ended() {
            self.publish_end();
        }
    }

    fn finish_abort(&mut self) {
        if self.live.is_ended() {
            return;
        }
        if let Err(e) = self.live.abort() {
            tracing::error!(error = %e, "abort failed");
        }
        self.publish_state();
        self.publish_end();
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Attach { role, reply } => {
                let res = if role == Role::Player && self.player_attached {
                    Err(Rejection::new(ErrorCode::RoleMismatch, "session already has a player"))
                } else {
                    if role == Role::Player {
                        self.player_attached = true;
                    }
                    Ok(Attachment {
                        frames: self.frames.subscribe(),
                        latest: self.latest.iter().chain(&self.end).cloned().collect(),
                    })
                };
                let _ = reply.send(res);
            }
            Command::Detach { role } => {
                if role == Role::Player {
                    self.player_attached = false;
                    if self.running {
                        tracing::info!("player disconnected");
                        self.finish_abort();
                    }
                }
            }
            Command::Hr { sample, reply } => {
                let _ = reply.send(self.on_hr(sample));
            }
            Command::Input { flap, reply } => {
                let _ = reply.send(self.on_input(flap));
            }
            Command::Questionnaire { instrument, items, reply } => {
                let _ = reply.send(self.on_questionnaire(instrument, items));
            }
            Command::Record { reply } => {
                let _ = reply.send(self.live.record().clone());
            }
            Command::Questionnaires { reply } => {
                let _ = reply.send(self.questionnaires.clone());
            }
        }
    }

    fn on_hr(&mut self, sample: HrSample) -> Result<Option<String>, Rejection> {
        if self.live.is_ended() {
            return Err(Rejection::new(ErrorCode::SessionEnded, "session has ended"));
        }
        match self.live.ingest_hr(sample) {
            Ok(_) => {
                if !self.running {
                    self.publish_state();
                }
                Ok(None)
            }
            Err(SessionError::Adapt(e @ (AdaptError::Implausible(_) | AdaptError::Stale { .. }))) => {
                Ok(Some(e.to_string()))
            }
            Err(e) => Err(Rejection::new(ErrorCode::Internal, e.to_string())),
        }
    }

    fn on_input(&mut self, flap: bool) -> Result<(), Rejection> {
        if self.live.is_ended() {
            return Err(Rejection::new(ErrorCode::SessionEnded, "session has ended"));
        }
        if !self.running {
            if self.live.state().phase == Phase::Ready {
                if let Err(e) = self.live.controller().require_start() {
                    return Err(Rejection::new(ErrorCode::BaselineIncomplete, e.to_string()));
                }
            }
            self.running = true;
        }
        if flap && self.pending_flaps < MAX_PENDING_FLAPS {
            self.pending_flaps += 1;
        }
        Ok(())
    }

    fn on_questionnaire(&mut self, instrument: Instrument, items: Vec<QuestionnaireItem>) -> Result<(), Rejection> {
        validate_questionnaire(instrument, &items).map_err(|m| Rejection::new(ErrorCode::InvalidQuestionnaire, m))?;
        let header = &self.live.record().header;
        let stored = StoredQuestionnaire {
            session_id: header.session_id.clone(),
            participant: header.participant.clone(),
            instrument,
            items,
        };
        if let Some(path) = &self.questionnaire_path {
            let line = serde_json::to_string(&stored).expect("serializable") + "\n";
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| f.write_all(line.as_bytes()))
                .map_err(|e| Rejection::new(ErrorCode::Internal, e.to_string()))?;
        }
        self.questionnaires.push(stored);
        Ok(())
    }
}
