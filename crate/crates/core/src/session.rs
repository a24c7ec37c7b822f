//! Append-only session logs and deterministic replay.
//!
//! A log is line-delimited JSON: one header object, then one event per line.
//! Event ticks use the following convention: an `Input`, `Hr` or `Adapt`
//! event labelled `t` was applied to the state after `t` steps, so it first
//! affects the step that produces tick `t + 1`. `StateHash` and `End` labelled
//! `t` describe the state after `t` steps.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::adaptation::{
    compute_baseline, AdaptError, AdaptKind, HrController, HrSample, Ingested, SpeedCommand,
    DEFAULT_PIVOT,
};
use crate::game::{
    init_session, EndReason, GameConfig, GameError, GameState, LevelSpec, SpeedMultiplier,
    StepEvents, TickInput,
};

pub const FORMAT: &str = "calmplay-session/1";
pub const DEFAULT_CHECKPOINT_INTERVAL: u64 = 60;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed log: {0}")]
    Malformed(String),
    #[error("record already finalized")]
    Finalized,
    #[error("event at tick {got} precedes last event at tick {last}")]
    OutOfOrder { got: u64, last: u64 },
    #[error("record not finalized")]
    NotFinalized,
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error("replay diverged at tick {tick}: {detail}")]
    Divergence { tick: u64, detail: String },
    #[error("insufficient sessions: need {need}, got {got}")]
    InsufficientSessions { need: usize, got: usize },
}

/// 64-bit state digest, written as 16 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateDigest(pub u64);

impl fmt::Display for StateDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for StateDigest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StateDigest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 16 {
            return Err(serde::de::Error::custom("state digest must be 16 hex digits"));
        }
        u64::from_str_radix(&s, 16).map(StateDigest).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub format: String,
    pub session_id: String,
    pub level: LevelSpec,
    pub config: GameConfig,
    pub seed: u64,
    pub pivot: f64,
    pub exit_margin: f64,
    pub checkpoint_interval: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant: Option<String>,
    /// Position of this session in the participant's play order for the level (1-based).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<u32>,
}

impl SessionHeader {
    pub fn new(session_id: impl Into<String>, level: LevelSpec, config: GameConfig, seed: u64) -> Self {
        Self {
            format: FORMAT.to_string(),
            session_id: session_id.into(),
            level,
            config,
            seed,
            pivot: DEFAULT_PIVOT,
            exit_margin: 0.0,
            checkpoint_interval: DEFAULT_CHECKPOINT_INTERVAL,
            participant: None,
            ordinal: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventKind {
    Input {
        flap: bool,
    },
    Hr {
        ts: u64,
        bpm: f64,
        source_id: String,
        /// Sample went into the pre-game baseline window.
        baseline: bool,
    },
    Adapt {
        kind: AdaptKind,
        bpm: f64,
        multiplier: SpeedMultiplier,
    },
    StateHash {
        hash: StateDigest,
    },
    End {
        reason: EndReason,
        duration_s: f64,
        final_score: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub reason: EndReason,
    pub duration_s: f64,
    pub final_score: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub header: SessionHeader,
    pub events: Vec<Event>,
}

impl SessionRecord {
    pub fn new(header: SessionHeader) -> Self {
        Self { header, events: Vec::new() }
    }

    pub fn is_finalized(&self) -> bool {
        matches!(self.events.last(), Some(Event { kind: EventKind::End { .. }, .. }))
    }

    pub fn outcome(&self) -> Option<Outcome> {
        match self.events.last() {
            Some(Event { kind: EventKind::End { reason, duration_s, final_score }, .. }) => {
                Some(Outcome { reason: *reason, duration_s: *duration_s, final_score: *final_score })
            }
            _ => None,
        }
    }

    /// Logged `(tick, hash)` checkpoints in order.
    pub fn hash_trace(&self) -> Vec<(u64, u64)> {
        self.events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::StateHash { hash } => Some((e.t, hash.0)),
                _ => None,
            })
            .collect()
    }

    /// In-game heart-rate samples (baseline window excluded), in log order.
    pub fn gameplay_bpm(&self) -> Vec<f64> {
        self.hr_bpm(false)
    }

    /// Baseline from the logged pre-game window, if complete.
    pub fn baseline_bpm(&self) -> Option<f64> {
        compute_baseline(&self.hr_bpm(true)).ok()
    }

    fn hr_bpm(&self, want_baseline: bool) -> Vec<f64> {
        self.events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::Hr { bpm, baseline, .. } if *baseline == want_baseline => Some(*bpm),
                _ => None,
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    /// Strict parse: every line must be complete and the log well ordered.
    pub fn from_jsonl(text: &str) -> Result<Self, SessionError> {
        let (record, truncated) = parse_lines(text.lines().map(|l| Ok(l.to_string())), false)?;
        debug_assert!(!truncated);
        Ok(record)
    }

    pub fn read(path: &Path) -> Result<Self, SessionError> {
        let file = BufReader::new(File::open(path)?);
        let (record, _) = parse_lines(file.lines(), false)?;
        Ok(record)
    }

    /// Reads a possibly interrupted log, dropping an incomplete final line.
    /// Returns the recovered prefix and whether anything was dropped.
    pub fn read_lenient(path: &Path) -> Result<(Self, bool), SessionError> {
        let file = BufReader::new(File::open(path)?);
        parse_lines(file.lines(), true)
    }

    pub fn write(&self, path: &Path) -> Result<(), SessionError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    fn check_append(&self, event: &Event) -> Result<(), SessionError> {
        if self.is_finalized() {
            return Err(SessionError::Finalized);
        }
        if let Some(last) = self.events.last() {
            if event.t < last.t {
                return Err(SessionError::OutOfOrder { got: event.t, last: last.t });
            }
        }
        Ok(())
    }

    /// Appends to the in-memory log, enforcing order and finalization.
    pub fn append(&mut self, event: Event) -> Result<(), SessionError> {
        self.check_append(&event)?;
        self.events.push(event);
        Ok(())
    }
}

fn parse_lines<I>(lines: I, lenient: bool) -> Result<(SessionRecord, bool), SessionError>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let lines: Vec<String> = lines.collect::<Result<_, _>>()?;
    let mut iter = lines.iter().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
    let (_, first) = iter.next().ok_or_else(|| SessionError::Malformed("empty log".into()))?;
    let header: SessionHeader =
        serde_json::from_str(first).map_err(|source| SessionError::Parse { line: 1, source })?;
    if header.format != FORMAT {
        return Err(SessionError::Malformed(format!("unknown format {:?}", header.format)));
    }
    let mut record = SessionRecord::new(header);
    while let Some((idx, line)) = iter.next() {
        let is_last = iter.peek().is_none();
        match serde_json::from_str::<Event>(line) {
            Ok(e) => record.append(e)?,
            Err(_) if lenient && is_last => return Ok((record, true)),
            Err(source) => return Err(SessionError::Parse { line: idx + 1, source }),
        }
    }
    Ok((record, false))
}

/// Writes events through to disk as they are appended.
pub struct SessionWriter {
    record: SessionRecord,
    sink: Option<File>,
    durable: bool,
    path: Option<PathBuf>,
}

impl SessionWriter {
    pub fn in_memory(header: SessionHeader) -> Self {
        Self { record: SessionRecord::new(header), sink: None, durable: false, path: None }
    }

    /// Creates the log file and writes the header. With `durable`, every
    /// append is synced to disk before returning.
    pub fn create(header: SessionHeader, path: &Path, durable: bool) -> Result<Self, SessionError> {
        let mut file = OpenOptions::new().write(true).create_new(true).open(path)?;
        writeln!(file, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        if durable {
            file.sync_data()?;
        }
        Ok(Self {
            record: SessionRecord::new(header),
            sink: Some(file),
            durable,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn record(&self) -> &SessionRecord {
        &self.record
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&mut self, event: Event) -> Result<(), SessionError> {
        self.record.check_append(&event)?;
        if let Some(file) = &mut self.sink {
            let line = serde_json::to_string(&event).expect("event serializes");
            writeln!(file, "{line}")?;
            file.flush()?;
            if self.durable {
                file.sync_data()?;
            }
        }
        self.record.events.push(event);
        Ok(())
    }

    pub fn finish(self) -> SessionRecord {
        self.record
    }
}

/// A live session: game state, HR controller and log kept in lockstep.
/// Both the headless runner and the relay drive sessions through this type.
pub struct LiveSession {
    state: GameState,
    controller: HrController,
    writer: SessionWriter,
    checkpoint_interval: u64,
    baseline_gate: bool,
}

impl LiveSession {
    pub fn new(writer: SessionWriter) -> Result<Self, SessionError> {
        let h = writer.record().header.clone();
        let state = init_session(h.config, h.level, h.seed)?;
        let controller = HrController::new(h.level, h.pivot, h.exit_margin);
        Ok(Self {
            state,
            controller,
            writer,
            checkpoint_interval: h.checkpoint_interval.max(1),
            baseline_gate: true,
        })
    }

    /// Lets an adaptive level start without a baseline (no sensor attached).
    /// The session then plays with level-1 mechanics.
    pub fn without_baseline_gate(mut self) -> Self {
        self.baseline_gate = false;
        self
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn controller(&self) -> &HrController {
        &self.controller
    }

    pub fn record(&self) -> &SessionRecord {
        self.writer.record()
    }

    pub fn level(&self) -> LevelSpec {
        self.writer.record().header.level
    }

    pub fn is_ended(&self) -> bool {
        self.state.is_ended()
    }

    /// Applies one heart-rate sample before the next step and logs it.
    pub fn ingest_hr(&mut self, sample: HrSample) -> Result<Ingested, SessionError> {
        if self.state.is_ended() {
            return Err(SessionError::Finalized);
        }
        let t = self.state.tick;
        let ingested = self.controller.ingest(&sample, t)?;
        self.writer.append(Event {
            t,
            kind: EventKind::Hr {
                ts: sample.timestamp_ms,
                bpm: sample.bpm,
                source_id: sample.source_id,
                baseline: ingested.is_baseline(),
            },
        })?;
        if let Ingested::Applied(Some(SpeedCommand(m))) = ingested {
            self.state.set_speed_multiplier(m)?;
            let kind = match m {
                SpeedMultiplier::Reduced => AdaptKind::BreachEnter,
                SpeedMultiplier::Nominal => AdaptKind::BreachExit,
            };
            self.writer.append(Event {
                t,
                kind: EventKind::Adapt { kind, bpm: sample.bpm, multiplier: m },
            })?;
        }
        Ok(ingested)
    }

    /// Advances one tick. The first tick of an adaptive level requires a complete baseline.
    pub fn tick(&mut self, input: TickInput) -> Result<StepEvents, SessionError> {
        if self.state.is_ended() {
            return Ok(StepEvents::default());
        }
        if self.state.tick == 0 && self.baseline_gate {
            self.controller.require_start()?;
        }
        if input.flap {
            self.writer.append(Event { t: self.state.tick, kind: EventKind::Input { flap: true } })?;
        }
        let events = self.state.advance(input);
        let t = self.state.tick;
        if t % self.checkpoint_interval == 0 || self.state.is_ended() {
            self.checkpoint()?;
        }
        if self.state.is_ended() {
            self.write_end()?;
        }
        Ok(events)
    }

    /// Ends the session from outside the simulation.
    pub fn abort(&mut self) -> Result<(), SessionError> {
        if self.state.is_ended() {
            return Ok(());
        }
        self.state.abort();
        self.checkpoint()?;
        self.write_end()
    }

    fn checkpoint(&mut self) -> Result<(), SessionError> {
        let hash = StateDigest(self.state.state_hash());
        self.writer.append(Event { t: self.state.tick, kind: EventKind::StateHash { hash } })
    }

    fn write_end(&mut self) -> Result<(), SessionError> {
        let reason = self.state.end_reason().expect("ended");
        self.writer.append(Event {
            t: self.state.tick,
            kind: EventKind::End {
                reason,
                duration_s: self.state.elapsed,
                final_score: self.state.score,
            },
        })
    }

    pub fn into_record(self) -> SessionRecord {
        self.writer.finish()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub final_state: GameState,
    /// Recomputed `(tick, hash)` at every logged checkpoint.
    pub trace: Vec<(u64, u64)>,
}

/// Re-simulates a finalized record and checks every logged checkpoint.
pub fn replay(record: &SessionRecord) -> Result<ReplayReport, SessionError> {
    if !record.is_finalized() {
        return Err(SessionError::NotFinalized);
    }
    replay_prefix(record)
}

/// Like [`replay`], but accepts a log cut short (for example by a crash).
pub fn replay_prefix(record: &SessionRecord) -> Result<ReplayReport, SessionError> {
    let h = &record.header;
    let mut state = init_session(h.config.clone(), h.level, h.seed)?;
    let mut controller = HrController::new(h.level, h.pivot, h.exit_margin);
    // An abort is not a simulation step: it is applied just before the final checkpoint.
    let abort_checkpoint = match record.outcome() {
        Some(Outcome { reason: EndReason::Aborted, .. }) => record.events.len().checked_sub(2),
        _ => None,
    };
    let mut pending_flap = false;
    let mut last_command: Option<(AdaptKind, SpeedMultiplier)> = None;
    let mut trace = Vec::new();

    for (idx, event) in record.events.iter().enumerate() {
        let t = event.t;
        while state.tick < t {
            if state.is_ended() {
                return Err(SessionError::Divergence {
                    tick: state.tick,
                    detail: format!("simulation ended ({:?}) before logged tick {t}", state.phase),
                });
            }
            state.advance(TickInput { flap: std::mem::take(&mut pending_flap) });
        }
        match &event.kind {
            EventKind::Input { flap } => pending_flap |= *flap,
            EventKind::Hr { ts, bpm, source_id, baseline } => {
                let sample = HrSample::new(*ts, *bpm, source_id.clone());
                let ingested = controller.ingest(&sample, t).map_err(|e| SessionError::Divergence {
                    tick: t,
                    detail: format!("logged sample rejected on replay: {e}"),
                })?;
                if ingested.is_baseline() != *baseline {
                    return Err(SessionError::Divergence {
                        tick: t,
                        detail: "baseline window membership differs".into(),
                    });
                }
                last_command = None;
                if let Ingested::Applied(Some(SpeedCommand(m))) = ingested {
                    state.set_speed_multiplier(m)?;
                    let kind = match m {
                        SpeedMultiplier::Reduced => AdaptKind::BreachEnter,
                        SpeedMultiplier::Nominal => AdaptKind::BreachExit,
                    };
                    last_command = Some((kind, m));
                }
            }
            EventKind::Adapt { kind, multiplier, .. } => {
                if last_command.take() != Some((*kind, *multiplier)) {
                    return Err(SessionError::Divergence {
                        tick: t,
                        detail: format!("logged {kind:?} not reproduced"),
                    });
                }
            }
            EventKind::StateHash { hash } => {
                if abort_checkpoint == Some(idx) {
                    state.abort();
                }
                let actual = state.state_hash();
                if actual != hash.0 {
                    return Err(SessionError::Divergence {
                        tick: t,
                        detail: format!("hash {:016x} != logged {hash}", actual),
                    });
                }
                trace.push((t, actual));
            }
            EventKind::End { reason, final_score, .. } => {
                if state.end_reason() != Some(*reason) || state.score != *final_score {
                    return Err(SessionError::Divergence {
                        tick: t,
                        detail: format!(
                            "end {:?}/{} != logged {reason:?}/{final_score}",
                            state.phase, state.score
                        ),
                    });
                }
            }
        }
    }
    Ok(ReplayReport { final_state: state, trace })
}

/// Which sessions of one level form the stressor window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowPolicy {
    /// Leading sessions dropped as practice.
    pub discard: usize,
    /// Sessions concatenated after the discarded ones.
    pub take: usize,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self { discard: 1, take: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StressorWindow {
    /// Baseline of the first retained session that has one.
    pub baseline_bpm: Option<f64>,
    pub samples: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Drops the first session and concatenates the in-game HR of the next two.
/// `records` must be in play order.
pub fn select_stressor_window(
    records: &[SessionRecord],
    policy: WindowPolicy,
) -> Result<StressorWindow, SessionError> {
    let need = policy.discard + policy.take;
    if records.len() < need {
        return Err(SessionError::InsufficientSessions { need, got: records.len() });
    }
    let mut window = StressorWindow { baseline_bpm: None, samples: Vec::new(), warnings: Vec::new() };
    for record in &records[policy.discard..need] {
        let samples = record.gameplay_bpm();
        if samples.is_empty() {
            window
                .warnings
                .push(format!("session {} has no in-game HR samples", record.header.session_id));
        }
        if window.baseline_bpm.is_none() {
            window.baseline_bpm = record.baseline_bpm();
        }
        window.samples.extend(samples);
    }
    Ok(window)
}
