//! Heart-rate difficulty controller: per-session baseline, threshold, and the
//! level-triggered speed reduction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{LevelSpec, SpeedMultiplier};

pub const MIN_BPM: f64 = 25.0;
pub const MAX_BPM: f64 = 250.0;
pub const DEFAULT_PIVOT: f64 = 5.0;
pub const BASELINE_SAMPLES: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdaptError {
    #[error("bpm {0} outside plausible range [25, 250]")]
    Implausible(f64),
    #[error("stale sample from {source_id}: timestamp {timestamp_ms} < last accepted {last_ms}")]
    Stale {
        source_id: String,
        timestamp_ms: u64,
        last_ms: u64,
    },
    #[error("baseline incomplete: {have} of {BASELINE_SAMPLES} valid samples")]
    BaselineIncomplete { have: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrSample {
    pub timestamp_ms: u64,
    pub bpm: f64,
    pub source_id: String,
}

impl HrSample {
    pub fn new(timestamp_ms: u64, bpm: f64, source_id: impl Into<String>) -> Self {
        Self { timestamp_ms, bpm, source_id: source_id.into() }
    }

    pub fn is_plausible(&self) -> bool {
        is_plausible(self.bpm)
    }
}

pub fn is_plausible(bpm: f64) -> bool {
    (MIN_BPM..=MAX_BPM).contains(&bpm)
}

/// Mean of the first five plausible samples. Implausible samples are skipped,
/// so later samples fill the window.
pub fn compute_baseline<'a, I>(samples: I) -> Result<f64, AdaptError>
where
    I: IntoIterator<Item = &'a f64>,
{
    let window: Vec<f64> = samples
        .into_iter()
        .copied()
        .filter(|b| is_plausible(*b))
        .take(BASELINE_SAMPLES)
        .collect();
    if window.len() < BASELINE_SAMPLES {
        return Err(AdaptError::BaselineIncomplete { have: window.len() });
    }
    Ok(window.iter().sum::<f64>() / BASELINE_SAMPLES as f64)
}

pub fn make_threshold(baseline: f64, pivot: f64) -> f64 {
    baseline + pivot
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdaptKind {
    BreachEnter,
    BreachExit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptEvent {
    pub tick: u64,
    pub kind: AdaptKind,
    pub bpm: f64,
}

/// Message from the controller to the game loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpeedCommand(pub SpeedMultiplier);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationState {
    pub baseline_bpm: f64,
    pub pivot: f64,
    pub threshold_bpm: f64,
    /// Extra drop below threshold required to leave the breach state. Zero by default.
    pub exit_margin: f64,
    pub above_threshold: bool,
    pub breach_count: u32,
    pub events: Vec<AdaptEvent>,
    last_timestamp: BTreeMap<String, u64>,
}

impl AdaptationState {
    pub fn new(baseline_bpm: f64, pivot: f64) -> Self {
        Self {
            baseline_bpm,
            pivot,
            threshold_bpm: make_threshold(baseline_bpm, pivot),
            exit_margin: 0.0,
            above_threshold: false,
            breach_count: 0,
            events: Vec::new(),
            last_timestamp: BTreeMap::new(),
        }
    }

    pub fn with_exit_margin(mut self, margin: f64) -> Self {
        self.exit_margin = margin;
        self
    }

    pub fn multiplier(&self) -> SpeedMultiplier {
        if self.above_threshold {
            SpeedMultiplier::Reduced
        } else {
            SpeedMultiplier::Nominal
        }
    }

    /// Applies one sample. Returns a command only when the breach state flips.
    /// Non-adaptive levels leave the state untouched.
    pub fn on_hr_sample(
        &mut self,
        sample: &HrSample,
        level: &LevelSpec,
        tick: u64,
    ) -> Result<Option<SpeedCommand>, AdaptError> {
        if !level.hr_adaptive {
            return Ok(None);
        }
        if !sample.is_plausible() {
            return Err(AdaptError::Implausible(sample.bpm));
        }
        check_order(&mut self.last_timestamp, sample)?;

        let bpm = sample.bpm;
        if !self.above_threshold && bpm > self.threshold_bpm {
            self.above_threshold = true;
            self.breach_count += 1;
            self.events.push(AdaptEvent { tick, kind: AdaptKind::BreachEnter, bpm });
            Ok(Some(SpeedCommand(SpeedMultiplier::Reduced)))
        } else if self.above_threshold && bpm <= self.threshold_bpm - self.exit_margin {
            self.above_threshold = false;
            self.events.push(AdaptEvent { tick, kind: AdaptKind::BreachExit, bpm });
            Ok(Some(SpeedCommand(SpeedMultiplier::Nominal)))
        } else {
            Ok(None)
        }
    }
}

fn check_order(last: &mut BTreeMap<String, u64>, sample: &HrSample) -> Result<(), AdaptError> {
    if let Some(&prev) = last.get(&sample.source_id) {
        if sample.timestamp_ms < prev {
            return Err(AdaptError::Stale {
                source_id: sample.source_id.clone(),
                timestamp_ms: sample.timestamp_ms,
                last_ms: prev,
            });
        }
    }
    last.insert(sample.source_id.clone(), sample.timestamp_ms);
    Ok(())
}

/// What the controller did with an accepted sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ingested {
    /// Counted toward the baseline window; `have` samples so far.
    Baseline { have: usize },
    /// Fifth baseline sample; adaptation is armed from here on.
    BaselineComplete { baseline: f64, threshold: f64 },
    Applied(Option<SpeedCommand>),
}

impl Ingested {
    pub fn is_baseline(&self) -> bool {
        matches!(self, Ingested::Baseline { .. } | Ingested::BaselineComplete { .. })
    }
}

/// Baseline collection followed by adaptation, as one serial state machine.
/// Baselines are collected on every level so reactivity can be computed later;
/// only adaptive levels gate the start of play on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrController {
    pub level: LevelSpec,
    pub pivot: f64,
    pub exit_margin: f64,
    baseline_window: Vec<f64>,
    baseline_timestamps: BTreeMap<String, u64>,
    adaptation: Option<AdaptationState>,
}

impl HrController {
    pub fn new(level: LevelSpec, pivot: f64, exit_margin: f64) -> Self {
        Self {
            level,
            pivot,
            exit_margin,
            baseline_window: Vec::with_capacity(BASELINE_SAMPLES),
            baseline_timestamps: BTreeMap::new(),
            adaptation: None,
        }
    }

    pub fn baseline_ready(&self) -> bool {
        self.adaptation.is_some()
    }

    pub fn baseline_progress(&self) -> usize {
        self.baseline_window.len()
    }

    /// Whether play may begin: always for non-adaptive levels.
    pub fn can_start(&self) -> bool {
        !self.level.hr_adaptive || self.baseline_ready()
    }

    pub fn require_start(&self) -> Result<(), AdaptError> {
        if self.can_start() {
            Ok(())
        } else {
            Err(AdaptError::BaselineIncomplete { have: self.baseline_window.len() })
        }
    }

    pub fn adaptation(&self) -> Option<&AdaptationState> {
        self.adaptation.as_ref()
    }

    pub fn baseline_bpm(&self) -> Option<f64> {
        self.adaptation.as_ref().map(|a| a.baseline_bpm)
    }

    /// Threshold, when one exists and the level uses it.
    pub fn threshold_bpm(&self) -> Option<f64> {
        if self.level.hr_adaptive {
            self.adaptation.as_ref().map(|a| a.threshold_bpm)
        } else {
            None
        }
    }

    pub fn ingest(&mut self, sample: &HrSample, tick: u64) -> Result<Ingested, AdaptError> {
        if !sample.is_plausible() {
            return Err(AdaptError::Implausible(sample.bpm));
        }
        match &mut self.adaptation {
            Some(a) => a.on_hr_sample(sample, &self.level, tick).map(Ingested::Applied),
            None => {
                check_order(&mut self.baseline_timestamps, sample)?;
                self.baseline_window.push(sample.bpm);
                if self.baseline_window.len() < BASELINE_SAMPLES {
                    return Ok(Ingested::Baseline { have: self.baseline_window.len() });
                }
                let baseline = compute_baseline(&self.baseline_window)?;
                let mut state =
                    AdaptationState::new(baseline, self.pivot).with_exit_margin(self.exit_margin);
                state.last_timestamp = std::mem::take(&mut self.baseline_timestamps);
                let threshold = state.threshold_bpm;
                self.adaptation = Some(state);
                Ok(Ingested::BaselineComplete { baseline, threshold })
            }
        }
    }
}
