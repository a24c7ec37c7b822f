//! Fixed-timestep world simulation.
//!
//! Coordinates are screen-style: `x` grows to the right, `y` grows downward.
//! A flap sets the vertical velocity to `-flap_impulse` (upward) and gravity
//! adds `gravity * dt` every tick otherwise. Pillars move right to left; a
//! bird overlapping a pillar body is dragged left instead of dying.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Fraction of the gap height under which a clean pass counts as a near miss.
pub const NEAR_MISS_FRACTION: f64 = 0.10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("{invariant} violated: {detail}")]
    InvalidConfig {
        invariant: &'static str,
        detail: String,
    },
    #[error("invalid level spec: {0}")]
    InvalidLevel(String),
    #[error("timestep {got} does not match the fixed step 1/{tick_rate}")]
    VariableTimestep { got: f64, tick_rate: u32 },
    #[error("speed multiplier {0} is not one of 1.0 or 0.7")]
    InvalidMultiplier(f64),
    #[error("session already ended")]
    Ended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub world_width: f64,
    pub world_height: f64,
    pub bird_home_x: f64,
    /// Side length of the bird's square hitbox.
    pub bird_size: f64,
    pub gravity: f64,
    pub flap_impulse: f64,
    pub pillar_width: f64,
    pub initial_gap: f64,
    pub gap_increment_fraction: f64,
    pub initial_pillar_speed: f64,
    pub speed_growth_factor: f64,
    pub speed_cap: f64,
    pub gap_cap: f64,
    pub pushback_speed: f64,
    pub pillar_spacing: f64,
    pub tick_rate: u32,
}

impl Default for GameConfig {
    fn default() -> Self {
        let initial_gap = 160.0;
        let initial_pillar_speed = 120.0;
        Self {
            world_width: 480.0,
            world_height: 640.0,
            bird_home_x: 120.0,
            bird_size: 24.0,
            gravity: 1200.0,
            flap_impulse: 330.0,
            pillar_width: 64.0,
            initial_gap,
            gap_increment_fraction: 0.20,
            initial_pillar_speed,
            speed_growth_factor: 1.10,
            speed_cap: 2.5 * initial_pillar_speed,
            gap_cap: 2.0 * initial_gap,
            pushback_speed: 40.0,
            pillar_spacing: 480.0,
            tick_rate: 60,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<(), GameError> {
        let positive = [
            ("world_width", self.world_width),
            ("world_height", self.world_height),
            ("bird_home_x", self.bird_home_x),
            ("bird_size", self.bird_size),
            ("gravity", self.gravity),
            ("flap_impulse", self.flap_impulse),
            ("pillar_width", self.pillar_width),
            ("initial_gap", self.initial_gap),
            ("initial_pillar_speed", self.initial_pillar_speed),
            ("speed_cap", self.speed_cap),
            ("gap_cap", self.gap_cap),
            ("pushback_speed", self.pushback_speed),
            ("pillar_spacing", self.pillar_spacing),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(GameError::InvalidConfig {
                    invariant: "positivity",
                    detail: format!("{name} must be finite and > 0, got {value}"),
                });
            }
        }
        if self.tick_rate == 0 {
            return Err(GameError::InvalidConfig {
                invariant: "positivity",
                detail: "tick_rate must be > 0".into(),
            });
        }
        if self.initial_gap > self.gap_cap || self.gap_cap > self.world_height {
            return Err(GameError::InvalidConfig {
                invariant: "gap_cap",
                detail: format!(
                    "need initial_gap ({}) <= gap_cap ({}) <= world_height ({})",
                    self.initial_gap, self.gap_cap, self.world_height
                ),
            });
        }
        if self.initial_pillar_speed > self.speed_cap {
            return Err(GameError::InvalidConfig {
                invariant: "speed_cap",
                detail: format!(
                    "initial_pillar_speed ({}) exceeds speed_cap ({})",
                    self.initial_pillar_speed, self.speed_cap
                ),
            });
        }
        if !(self.gap_increment_fraction.is_finite() && self.gap_increment_fraction >= 0.0) {
            return Err(GameError::InvalidConfig {
                invariant: "gap_increment_fraction",
                detail: format!("must be >= 0, got {}", self.gap_increment_fraction),
            });
        }
        if !(self.speed_growth_factor.is_finite() && self.speed_growth_factor >= 1.0) {
            return Err(GameError::InvalidConfig {
                invariant: "speed_growth_factor",
                detail: format!("must be >= 1, got {}", self.speed_growth_factor),
            });
        }
        Ok(())
    }

    /// The only accepted timestep.
    pub fn dt(&self) -> f64 {
        1.0 / f64::from(self.tick_rate)
    }

    /// Nominal speed of the pillar spawned `index`-th: compounding growth, capped.
    pub fn nominal_speed(&self, index: u64) -> f64 {
        let exp = index.min(i32::MAX as u64) as i32;
        (self.initial_pillar_speed * self.speed_growth_factor.powi(exp)).min(self.speed_cap)
    }

    /// Gap height of the pillar spawned `index`-th: additive growth in units of the initial gap, capped.
    pub fn gap_height(&self, index: u64) -> f64 {
        (self.initial_gap * (1.0 + self.gap_increment_fraction * index as f64)).min(self.gap_cap)
    }

    /// Digest of the canonical config encoding, used to pin a session's physics on the wire.
    pub fn digest(&self) -> u64 {
        let mut enc = Canonical::default();
        self.encode(&mut enc);
        enc.finish()
    }

    fn encode(&self, enc: &mut Canonical) {
        for v in [
            self.world_width,
            self.world_height,
            self.bird_home_x,
            self.bird_size,
            self.gravity,
            self.flap_impulse,
            self.pillar_width,
            self.initial_gap,
            self.gap_increment_fraction,
            self.initial_pillar_speed,
            self.speed_growth_factor,
            self.speed_cap,
            self.gap_cap,
            self.pushback_speed,
            self.pillar_spacing,
        ] {
            enc.f64(v);
        }
        enc.u32(self.tick_rate);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLevelSpec")]
pub struct LevelSpec {
    pub level_id: u8,
    pub show_score: bool,
    pub hr_adaptive: bool,
    pub target_score: Option<u32>,
}

#[derive(Deserialize)]
struct RawLevelSpec {
    level_id: u8,
    show_score: bool,
    hr_adaptive: bool,
    #[serde(default)]
    target_score: Option<u32>,
}

impl TryFrom<RawLevelSpec> for LevelSpec {
    type Error = GameError;

    fn try_from(raw: RawLevelSpec) -> Result<Self, Self::Error> {
        let spec = LevelSpec {
            level_id: raw.level_id,
            show_score: raw.show_score,
            hr_adaptive: raw.hr_adaptive,
            target_score: raw.target_score,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl LevelSpec {
    pub const DEFAULT_TARGET: u32 = 30;

    /// Level 1: no HUD, no adaptation. Level 2: HUD and adaptation.
    /// Level 3: level 2 plus the default target score.
    pub fn level(id: u8) -> Result<Self, GameError> {
        match id {
            1 => Ok(Self { level_id: 1, show_score: false, hr_adaptive: false, target_score: None }),
            2 => Ok(Self { level_id: 2, show_score: true, hr_adaptive: true, target_score: None }),
            3 => Ok(Self {
                level_id: 3,
                show_score: true,
                hr_adaptive: true,
                target_score: Some(Self::DEFAULT_TARGET),
            }),
            other => Err(GameError::InvalidLevel(format!("unknown level {other}"))),
        }
    }

    pub fn with_target(target: u32) -> Result<Self, GameError> {
        let spec = Self { target_score: Some(target), ..Self::level(3)? };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let ok = match self.level_id {
            1 => !self.show_score && !self.hr_adaptive && self.target_score.is_none(),
            2 => self.show_score && self.hr_adaptive && self.target_score.is_none(),
            3 => self.show_score && self.hr_adaptive && matches!(self.target_score, Some(t) if t > 0),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(GameError::InvalidLevel(format!("inconsistent flags for {self:?}")))
        }
    }
}

/// Two-valued speed multiplier applied to every pillar's nominal speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum SpeedMultiplier {
    #[default]
    Nominal,
    Reduced,
}

impl SpeedMultiplier {
    pub const REDUCED_FACTOR: f64 = 0.7;

    pub fn factor(self) -> f64 {
        match self {
            SpeedMultiplier::Nominal => 1.0,
            SpeedMultiplier::Reduced => Self::REDUCED_FACTOR,
        }
    }
}

impl TryFrom<f64> for SpeedMultiplier {
    type Error = GameError;

    fn try_from(m: f64) -> Result<Self, Self::Error> {
        if m == 1.0 {
            Ok(SpeedMultiplier::Nominal)
        } else if m == Self::REDUCED_FACTOR {
            Ok(SpeedMultiplier::Reduced)
        } else {
            Err(GameError::InvalidMultiplier(m))
        }
    }
}

impl From<SpeedMultiplier> for f64 {
    fn from(m: SpeedMultiplier) -> f64 {
        m.factor()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EndReason {
    Success,
    OutLeft,
    OutTop,
    OutBottom,
    /// Terminated from outside the simulation (harness time limit, player disconnect).
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Ready,
    Running,
    Ended(EndReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pillar {
    pub index: u64,
    /// Left edge.
    pub x: f64,
    pub gap_center_y: f64,
    pub gap_height: f64,
    pub nominal_speed: f64,
    pub scored: bool,
    pub touched: bool,
    /// Smallest vertical clearance between the bird and the gap edges while passing.
    pub min_clearance: Option<f64>,
}

impl Pillar {
    pub fn gap_top(&self) -> f64 {
        self.gap_center_y - self.gap_height / 2.0
    }

    pub fn gap_bottom(&self) -> f64 {
        self.gap_center_y + self.gap_height / 2.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickInput {
    pub flap: bool,
}

/// Things that happened during one tick, consumed by the HR simulator and the bot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepEvents {
    /// Bird started overlapping a pillar body this tick.
    pub collision: bool,
    pub passed: Vec<PassedPillar>,
    pub ended: Option<EndReason>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassedPillar {
    pub index: u64,
    pub near_miss: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub config: GameConfig,
    pub tick: u64,
    pub elapsed: f64,
    pub bird_x: f64,
    pub bird_y: f64,
    pub bird_vy: f64,
    pub in_contact: bool,
    pub pillars: Vec<Pillar>,
    pub next_pillar_index: u64,
    pub score: u32,
    pub speed_multiplier: SpeedMultiplier,
    pub phase: Phase,
    pub rng_seed: u64,
    pub target_score: Option<u32>,
}

/// Builds the initial world. Pure in its arguments.
pub fn init_session(config: GameConfig, level: LevelSpec, seed: u64) -> Result<GameState, GameError> {
    config.validate()?;
    level.validate()?;
    let mut state = GameState {
        tick: 0,
        elapsed: 0.0,
        bird_x: config.bird_home_x,
        bird_y: config.world_height / 2.0,
        bird_vy: 0.0,
        in_contact: false,
        pillars: Vec::new(),
        next_pillar_index: 0,
        score: 0,
        speed_multiplier: SpeedMultiplier::Nominal,
        phase: Phase::Ready,
        rng_seed: seed,
        target_score: level.target_score,
        config,
    };
    state.spawn_pillar();
    Ok(state)
}

impl GameState {
    pub fn is_ended(&self) -> bool {
        matches!(self.phase, Phase::Ended(_))
    }

    pub fn end_reason(&self) -> Option<EndReason> {
        match self.phase {
            Phase::Ended(r) => Some(r),
            _ => None,
        }
    }

    /// Pure step with the fixed timestep.
    pub fn step(&self, input: TickInput) -> GameState {
        let mut next = self.clone();
        next.advance(input);
        next
    }

    /// Pure step with an explicit timestep, which must equal `1 / tick_rate`.
    pub fn step_dt(&self, input: TickInput, dt: f64) -> Result<GameState, GameError> {
        if dt != self.config.dt() {
            return Err(GameError::VariableTimestep { got: dt, tick_rate: self.config.tick_rate });
        }
        Ok(self.step(input))
    }

    pub fn set_speed_multiplier(&mut self, m: SpeedMultiplier) -> Result<(), GameError> {
        if self.is_ended() {
            return Err(GameError::Ended);
        }
        self.speed_multiplier = m;
        Ok(())
    }

    /// Ends a live session from outside the simulation. No-op once ended.
    pub fn abort(&mut self) {
        if !self.is_ended() {
            self.phase = Phase::Ended(EndReason::Aborted);
        }
    }

    /// Effective horizontal speed of a pillar at the current multiplier.
    pub fn effective_speed(&self, pillar: &Pillar) -> f64 {
        pillar.nominal_speed * self.speed_multiplier.factor()
    }

    /// First pillar the bird has not yet fully cleared.
    pub fn next_pillar(&self) -> Option<&Pillar> {
        let bird_left = self.bird_x - self.config.bird_size / 2.0;
        self.pillars
            .iter()
            .find(|p| p.x + self.config.pillar_width >= bird_left)
    }

    /// In-place fixed-timestep advance. Ended states are left untouched.
    pub fn advance(&mut self, input: TickInput) -> StepEvents {
        let mut events = StepEvents::default();
        if self.is_ended() {
            return events;
        }
        if self.phase == Phase::Ready {
            self.phase = Phase::Running;
        }
        let cfg = &self.config;
        let dt = cfg.dt();
        let half = cfg.bird_size / 2.0;

        if input.flap {
            self.bird_vy = -cfg.flap_impulse;
        } else {
            self.bird_vy += cfg.gravity * dt;
        }
        self.bird_y += self.bird_vy * dt;

        let factor = self.speed_multiplier.factor();
        for p in &mut self.pillars {
            p.x -= p.nominal_speed * factor * dt;
        }

        let (top, bottom) = (self.bird_y - half, self.bird_y + half);
        let mut overlapping = false;
        for p in &mut self.pillars {
            let horizontal = self.bird_x + half > p.x && self.bird_x - half < p.x + cfg.pillar_width;
            if !horizontal {
                continue;
            }
            let clearance = (top - p.gap_top()).min(p.gap_bottom() - bottom);
            if clearance < 0.0 {
                overlapping = true;
                p.touched = true;
            } else {
                p.min_clearance = Some(p.min_clearance.map_or(clearance, |c| c.min(clearance)));
            }
        }
        if overlapping {
            self.bird_x -= cfg.pushback_speed * dt;
            events.collision = !self.in_contact;
        } else if self.bird_x < cfg.bird_home_x {
            self.bird_x = (self.bird_x + cfg.pushback_speed * dt).min(cfg.bird_home_x);
        }
        self.in_contact = overlapping;

        for p in &mut self.pillars {
            if !p.scored && p.x + cfg.pillar_width < self.bird_x {
                p.scored = true;
                self.score += 1;
                let near_miss = !p.touched
                    && p.min_clearance.is_some_and(|c| c < NEAR_MISS_FRACTION * p.gap_height);
                events.passed.push(PassedPillar { index: p.index, near_miss });
            }
        }

        let width = cfg.pillar_width;
        self.pillars.retain(|p| p.x + width >= 0.0);
        let need_spawn = match self.pillars.last() {
            Some(last) => self.config.world_width - last.x >= self.config.pillar_spacing,
            None => true,
        };
        if need_spawn {
            self.spawn_pillar();
        }

        self.tick += 1;
        self.elapsed = self.tick as f64 * dt;

        let cfg = &self.config;
        let reason = if self.bird_x + half < 0.0 {
            Some(EndReason::OutLeft)
        } else if self.bird_y < 0.0 {
            Some(EndReason::OutTop)
        } else if self.bird_y > cfg.world_height {
            Some(EndReason::OutBottom)
        } else if self.target_score.is_some_and(|t| self.score >= t) {
            Some(EndReason::Success)
        } else {
            None
        };
        if let Some(r) = reason {
            self.phase = Phase::Ended(r);
            events.ended = Some(r);
        }
        events
    }

    fn spawn_pillar(&mut self) {
        let index = self.next_pillar_index;
        let cfg = &self.config;
        let gap_height = cfg.gap_height(index);
        let slack = cfg.world_height - gap_height;
        let margin = (0.1 * cfg.world_height).min(slack / 2.0);
        let lo = gap_height / 2.0 + margin;
        let hi = cfg.world_height - gap_height / 2.0 - margin;
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(index);
        let u: f64 = rng.random();
        self.pillars.push(Pillar {
            index,
            x: cfg.world_width,
            gap_center_y: lo + u * (hi - lo),
            gap_height,
            nominal_speed: cfg.nominal_speed(index),
            scored: false,
            touched: false,
            min_clearance: None,
        });
        self.next_pillar_index += 1;
    }

    /// Canonical byte encoding. See `docs/canonical-state.md` for the layout.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Canonical::default();
        enc.bytes.extend_from_slice(b"CPGS1");
        self.config.encode(&mut enc);
        enc.u64(self.tick);
        enc.f64(self.elapsed);
        enc.f64(self.bird_x);
        enc.f64(self.bird_y);
        enc.f64(self.bird_vy);
        enc.u8(self.in_contact as u8);
        enc.u64(self.pillars.len() as u64);
        for p in &self.pillars {
            enc.u64(p.index);
            enc.f64(p.x);
            enc.f64(p.gap_center_y);
            enc.f64(p.gap_height);
            enc.f64(p.nominal_speed);
            enc.u8(p.scored as u8);
            enc.u8(p.touched as u8);
            match p.min_clearance {
                Some(c) => {
                    enc.u8(1);
                    enc.f64(c);
                }
                None => enc.u8(0),
            }
        }
        enc.u64(self.next_pillar_index);
        enc.u32(self.score);
        enc.f64(self.speed_multiplier.factor());
        let (phase, reason) = match self.phase {
            Phase::Ready => (0, 0),
            Phase::Running => (1, 0),
            Phase::Ended(r) => (
                2,
                match r {
                    EndReason::Success => 1,
                    EndReason::OutLeft => 2,
                    EndReason::OutTop => 3,
                    EndReason::OutBottom => 4,
                    EndReason::Aborted => 5,
                },
            ),
        };
        enc.u8(phase);
        enc.u8(reason);
        enc.u64(self.rng_seed);
        match self.target_score {
            Some(t) => {
                enc.u8(1);
                enc.u32(t);
            }
            None => enc.u8(0),
        }
        enc.bytes
    }

    /// First 8 bytes (big-endian) of SHA-256 over [`GameState::canonical_bytes`].
    pub fn state_hash(&self) -> u64 {
        digest64(&self.canonical_bytes())
    }
}

fn digest64(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(head)
}

#[derive(Default)]
struct Canonical {
    bytes: Vec<u8>,
}

impl Canonical {
    fn u8(&mut self, v: u8) {
        self.bytes.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn finish(self) -> u64 {
        digest64(&self.bytes)
    }
}
