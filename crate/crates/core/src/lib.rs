//! Heart-rate adaptive arcade game: deterministic simulation, the HR
//! difficulty controller, session logs with replay, a headless simulator and
//! the analysis toolkit used on recorded sessions.

pub mod adaptation;
pub mod analysis;
pub mod game;
pub mod hrsim;
pub mod session;

pub use adaptation::{
    compute_baseline, make_threshold, AdaptError, AdaptEvent, AdaptKind, AdaptationState, HrController,
    HrSample, Ingested, SpeedCommand,
};
pub use game::{
    init_session, EndReason, GameConfig, GameError, GameState, LevelSpec, Phase, Pillar, SpeedMultiplier,
    StepEvents, TickInput,
};
pub use hrsim::{run_headless, BotPilot, HeadlessOptions, HrSource, Pilot, ScriptedProfile, StressModel};
pub use session::{
    replay, select_stressor_window, Event, EventKind, LiveSession, SessionError, SessionHeader,
    SessionRecord, SessionWriter, WindowPolicy,
};
