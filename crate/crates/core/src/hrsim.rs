//! Synthetic heart rate and a scripted pilot for headless sessions.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{HrSample, MAX_BPM, MIN_BPM};
use crate::game::{GameState, Phase, StepEvents, TickInput};
use crate::session::{LiveSession, SessionError, SessionHeader, SessionRecord, SessionWriter};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid stress model: {0}")]
    InvalidModel(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid pilot: {0}")]
    InvalidPilot(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("profile json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// First-order relaxation toward a resting rate with event-driven jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressModel {
    pub baseline_bpm: f64,
    /// 1/s
    pub decay_rate: f64,
    pub collision_jump: f64,
    pub near_miss_jump: f64,
    pub noise_sd: f64,
    pub rng_seed: u64,
}

impl Default for StressModel {
    fn default() -> Self {
        Self {
            baseline_bpm: 72.0,
            decay_rate: 0.1,
            collision_jump: 8.0,
            near_miss_jump: 2.0,
            noise_sd: 0.5,
            rng_seed: 0,
        }
    }
}

impl StressModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.decay_rate > 0.0) {
            return Err(SimError::InvalidModel("decay_rate must be > 0".into()));
        }
        if self.collision_jump < 0.0 || self.near_miss_jump < 0.0 {
            return Err(SimError::InvalidModel("jumps must be >= 0".into()));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(SimError::InvalidModel("noise_sd must be >= 0".into()));
        }
        Ok(())
    }
}

/// Game happenings the stress model reacts to over one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GameStimuli {
    pub collisions: u32,
    pub near_misses: u32,
}

impl From<&StepEvents> for GameStimuli {
    fn from(ev: &StepEvents) -> Self {
        Self {
            collisions: ev.collision as u32,
            near_misses: ev.passed.iter().filter(|p| p.near_miss).count() as u32,
        }
    }
}

/// `bpm + decay·(baseline − bpm)·dt + jumps + N(0, noise_sd·√dt)`, clamped to the plausible range.
pub fn hr_step<R: Rng + ?Sized>(
    model: &StressModel,
    bpm: f64,
    stimuli: GameStimuli,
    dt: f64,
    rng: &mut R,
) -> f64 {
    debug_assert!(dt > 0.0);
    let jumps = f64::from(stimuli.collisions) * model.collision_jump
        + f64::from(stimuli.near_misses) * model.near_miss_jump;
    let noise = if model.noise_sd > 0.0 {
        Normal::new(0.0, model.noise_sd * dt.sqrt()).expect("finite sd").sample(rng)
    } else {
        0.0
    };
    (bpm + model.decay_rate * (model.baseline_bpm - bpm) * dt + jumps + noise).clamp(MIN_BPM, MAX_BPM)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub from_s: f64,
    pub bpm: f64,
}

/// Piecewise-constant heart rate over game time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ProfilePoint>", into = "Vec<ProfilePoint>")]
pub struct ScriptedProfile {
    points: Vec<ProfilePoint>,
}

impl TryFrom<Vec<ProfilePoint>> for ScriptedProfile {
    type Error = SimError;

    fn try_from(points: Vec<ProfilePoint>) -> Result<Self, Self::Error> {
        ScriptedProfile::new(points)
    }
}

impl From<ScriptedProfile> for Vec<ProfilePoint> {
    fn from(p: ScriptedProfile) -> Self {
        p.points
    }
}

impl ScriptedProfile {
    pub fn new(points: Vec<ProfilePoint>) -> Result<Self, SimError> {
        match points.first() {
            None => return Err(SimError::InvalidProfile("empty profile".into())),
            Some(p) if p.from_s != 0.0 => {
                return Err(SimError::InvalidProfile("first point must start at 0".into()))
            }
            _ => {}
        }
        if points.windows(2).any(|w| !(w[1].from_s > w[0].from_s)) {
            return Err(SimError::InvalidProfile("times must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    pub fn constant(bpm: f64) -> Self {
        Self { points: vec![ProfilePoint { from_s: 0.0, bpm }] }
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn points(&self) -> &[ProfilePoint] {
        &self.points
    }

    pub fn bpm_at(&self, t_s: f64) -> f64 {
        self.points
            .iter()
            .take_while(|p| p.from_s <= t_s)
            .last()
            .unwrap_or(&self.points[0])
            .bpm
    }
}

/// Where a headless session's heart rate comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum HrSource {
    /// No sensor at all.
    None,
    Scripted(ScriptedProfile),
    Stress(StressModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotPilot {
    pub skill: f64,
    pub reaction_delay: u32,
    pub aim_noise_sd: f64,
    pub rng_seed: u64,
}

impl BotPilot {
    pub fn perfect(rng_seed: u64) -> Self {
        Self { skill: 1.0, reaction_delay: 0, aim_noise_sd: 0.0, rng_seed }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.skill) {
            return Err(SimError::InvalidPilot(format!("skill {} outside [0, 1]", self.skill)));
        }
        if !(self.aim_noise_sd >= 0.0) {
            return Err(SimError::InvalidPilot("aim_noise_sd must be >= 0".into()));
        }
        Ok(())
    }
}

/// A pilot with its random stream.
#[derive(Debug, Clone)]
pub struct Pilot {
    pub bot: BotPilot,
    rng: ChaCha8Rng,
    aim: Option<Normal<f64>>,
}

/// Per-tick probability that an unskilled pilot lets a needed flap slip.
const LAPSE_SCALE: f64 = 0.5;

impl Pilot {
    pub fn new(bot: BotPilot) -> Result<Self, SimError> {
        bot.validate()?;
        let aim = (bot.aim_noise_sd > 0.0)
            .then(|| Normal::new(0.0, bot.aim_noise_sd).expect("finite sd"));
        Ok(Self { rng: ChaCha8Rng::seed_from_u64(bot.rng_seed), aim, bot })
    }

    /// Flaps when the bird, coasting `reaction_delay` ticks ahead, would sit
    /// below the aim point (next gap centre minus aim noise).
    pub fn decide(&mut self, state: &GameState) -> TickInput {
        if matches!(state.phase, Phase::Ended(_)) {
            return TickInput::default();
        }
        let target = state
            .next_pillar()
            .map_or(state.config.world_height / 2.0, |p| p.gap_center_y);
        let noise = self.aim.map_or(0.0, |n| n.sample(&mut self.rng));
        let aim = target - noise;
        let want = predict_y(state, self.bot.reaction_delay) > aim;
        let lapse = self.bot.skill < 1.0
            && self.rng.random::<f64>() < (1.0 - self.bot.skill) * LAPSE_SCALE;
        TickInput { flap: want && !lapse }
    }
}

/// Bird height after `ticks` steps without flapping.
fn predict_y(state: &GameState, ticks: u32) -> f64 {
    let dt = state.config.dt();
    let (mut y, mut vy) = (state.bird_y, state.bird_vy);
    for _ in 0..ticks {
        vy += state.config.gravity * dt;
        y += vy * dt;
    }
    y
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadlessOptions {
    /// Sensor sampling rate.
    pub sample_hz: f64,
    /// Hard stop; the session is aborted when reached.
    pub max_seconds: f64,
    pub sensor_id: String,
}

impl Default for HeadlessOptions {
    fn default() -> Self {
        Self { sample_hz: 1.0, max_seconds: 300.0, sensor_id: "sim".into() }
    }
}

/// Runs one session without the network layer.
///
/// With a heart-rate source, five pre-game samples fill the baseline window,
/// then one sample is taken every `1/sample_hz` seconds of game time.
pub fn run_headless(
    header: SessionHeader,
    bot: BotPilot,
    hr_source: HrSource,
    opts: &HeadlessOptions,
) -> Result<SessionRecord, SimError> {
    run_headless_with(SessionWriter::in_memory(header), bot, hr_source, opts)
}

/// [`run_headless`] writing through an existing writer (for example a file sink).
pub fn run_headless_with(
    writer: SessionWriter,
    bot: BotPilot,
    hr_source: HrSource,
    opts: &HeadlessOptions,
) -> Result<SessionRecord, SimError> {
    let mut pilot = Pilot::new(bot)?;
    let mut live = LiveSession::new(writer)?;
    if hr_source == HrSource::None {
        live = live.without_baseline_gate();
    }
    let tick_rate = f64::from(live.state().config.tick_rate);
    let dt = 1.0 / tick_rate;
    let period_ms = (1000.0 / opts.sample_hz).round() as u64;
    let period_ticks = ((tick_rate / opts.sample_hz).round() as u64).max(1);
    let pregame_ms = 5 * period_ms;
    let max_ticks = (opts.max_seconds * tick_rate).round() as u64;

    let mut stress = match &hr_source {
        HrSource::Stress(m) => {
            m.validate()?;
            Some((m.clone(), m.baseline_bpm, ChaCha8Rng::seed_from_u64(m.rng_seed)))
        }
        _ => None,
    };
    let current_bpm = |stress: &Option<(StressModel, f64, ChaCha8Rng)>, t_s: f64| match &hr_source {
        HrSource::None => None,
        HrSource::Scripted(p) => Some(p.bpm_at(t_s)),
        HrSource::Stress(_) => stress.as_ref().map(|s| s.1),
    };

    if !matches!(hr_source, HrSource::None) {
        for k in 0..5u64 {
            let bpm = current_bpm(&stress, 0.0).expect("source present");
            live.ingest_hr(HrSample::new(k * period_ms, bpm, opts.sensor_id.clone()))?;
        }
    }

    while !live.is_ended() {
        let tick = live.state().tick;
        if tick >= max_ticks {
            live.abort()?;
            break;
        }
        if tick > 0 && tick % period_ticks == 0 {
            let t_s = tick as f64 * dt;
            if let Some(bpm) = current_bpm(&stress, t_s) {
                let ts = pregame_ms + (t_s * 1000.0).round() as u64;
                live.ingest_hr(HrSample::new(ts, bpm, opts.sensor_id.clone()))?;
            }
        }
        let input = pilot.decide(live.state());
        let events = live.tick(input)?;
        if let Some((model, bpm, rng)) = &mut stress {
            *bpm = hr_step(model, *bpm, GameStimuli::from(&events), dt, rng);
        }
    }
    Ok(live.into_record())
}
