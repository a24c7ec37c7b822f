//! Python bindings. Results with nested structure come back as plain dicts.

use calmplay_core::analysis::{self, PanasResponse, PxiItem, PxiResponse};
use calmplay_core::session::{replay, replay_prefix, SessionWriter};
use calmplay_core::{
    BotPilot, GameConfig as CoreConfig, HeadlessOptions, HrSample, HrSource, Ingested, LevelSpec, LiveSession,
    Phase, ScriptedProfile, SessionHeader, SessionRecord, StressModel, TickInput,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_loads<'py>(py: Python<'py>, text: String) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn level(id: u8) -> PyResult<LevelSpec> {
    LevelSpec::level(id).map_err(err)
}

#[pyclass(name = "GameConfig", module = "calmplay", from_py_object)]
#[derive(Clone)]
struct GameConfig {
    inner: CoreConfig,
}

#[pymethods]
impl GameConfig {
    #[new]
    fn new() -> Self {
        Self { inner: CoreConfig::default() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: CoreConfig = serde_json::from_str(text).map_err(err)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("serializable")
    }

    fn digest(&self) -> String {
        format!("{:016x}", self.inner.digest())
    }

    fn nominal_speed(&self, index: u64) -> f64 {
        self.inner.nominal_speed(index)
    }

    fn gap_height(&self, index: u64) -> f64 {
        self.inner.gap_height(index)
    }

    #[getter]
    fn tick_rate(&self) -> u32 {
        self.inner.tick_rate
    }

    #[getter]
    fn world_height(&self) -> f64 {
        self.inner.world_height
    }
}

/// A live session with an in-memory log.
#[pyclass(module = "calmplay")]
struct Session {
    live: Option<LiveSession>,
}

impl Session {
    fn live(&self) -> PyResult<&LiveSession> {
        self.live.as_ref().ok_or_else(|| PyRuntimeError::new_err("session consumed"))
    }

    fn live_mut(&mut self) -> PyResult<&mut LiveSession> {
        self.live.as_mut().ok_or_else(|| PyRuntimeError::new_err("session consumed"))
    }
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (level_id, seed, config=None, session_id="py".to_string(), baseline_gate=true))]
    fn new(level_id: u8, seed: u64, config: Option<GameConfig>, session_id: String, baseline_gate: bool) -> PyResult<Self> {
        let cfg = config.map_or_else(CoreConfig::default, |c| c.inner);
        let header = SessionHeader::new(session_id, level(level_id)?, cfg, seed);
        let mut live = LiveSession::new(SessionWriter::in_memory(header)).map_err(err)?;
        if !baseline_gate {
            live = live.without_baseline_gate();
        }
        Ok(Self { live: Some(live) })
    }

    /// Returns "baseline", "baseline_complete", "applied", or "adapted" when the speed changed.
    #[pyo3(signature = (timestamp_ms, bpm, source_id="py".to_string()))]
    fn ingest_hr(&mut self, timestamp_ms: u64, bpm: f64, source_id: String) -> PyResult<&'static str> {
        let ingested = self.live_mut()?.ingest_hr(HrSample::new(timestamp_ms, bpm, source_id)).map_err(err)?;
        Ok(match ingested {
            Ingested::Baseline { .. } => "baseline",
            Ingested::BaselineComplete { .. } => "baseline_complete",
            Ingested::Applied(None) => "applied",
            Ingested::Applied(Some(_)) => "adapted",
        })
    }

    #[pyo3(signature = (flap=false))]
    fn tick<'py>(&mut self, py: Python<'py>, flap: bool) -> PyResult<Bound<'py, PyDict>> {
        let ev = self.live_mut()?.tick(TickInput { flap }).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("collision", ev.collision)?;
        d.set_item("passed", ev.passed.iter().map(|p| (p.index, p.near_miss)).collect::<Vec<_>>())?;
        d.set_item("ended", ev.ended.map(|r| format!("{r:?}")))?;
        Ok(d)
    }

    fn abort(&mut self) -> PyResult<()> {
        self.live_mut()?.abort().map_err(err)
    }

    fn state_hash(&self) -> PyResult<u64> {
        Ok(self.live()?.state().state_hash())
    }

    #[getter]
    fn tick_count(&self) -> PyResult<u64> {
        Ok(self.live()?.state().tick)
    }

    #[getter]
    fn bird_y(&self) -> PyResult<f64> {
        Ok(self.live()?.state().bird_y)
    }

    #[getter]
    fn bird_vy(&self) -> PyResult<f64> {
        Ok(self.live()?.state().bird_vy)
    }

    #[getter]
    fn score(&self) -> PyResult<u32> {
        Ok(self.live()?.state().score)
    }

    #[getter]
    fn multiplier(&self) -> PyResult<f64> {
        Ok(self.live()?.state().speed_multiplier.factor())
    }

    #[getter]
    fn threshold(&self) -> PyResult<Option<f64>> {
        Ok(self.live()?.controller().threshold_bpm())
    }

    #[getter]
    fn next_gap_center(&self) -> PyResult<Option<f64>> {
        Ok(self.live()?.state().next_pillar().map(|p| p.gap_center_y))
    }

    #[getter]
    fn phase(&self) -> PyResult<String> {
        Ok(match self.live()?.state().phase {
            Phase::Ready => "ready".into(),
            Phase::Running => "running".into(),
            Phase::Ended(r) => format!("ended:{r:?}"),
        })
    }

    #[getter]
    fn ended(&self) -> PyResult<bool> {
        Ok(self.live()?.is_ended())
    }

    fn to_jsonl(&self) -> PyResult<String> {
        Ok(self.live()?.record().to_jsonl())
    }
}

/// Replays a JSONL session log; returns the final state hash. Raises on divergence.
#[pyfunction]
#[pyo3(signature = (text, allow_truncated=false))]
fn replay_jsonl(text: &str, allow_truncated: bool) -> PyResult<u64> {
    let record = SessionRecord::from_jsonl(text).map_err(err)?;
    let report = if allow_truncated { replay_prefix(&record) } else { replay(&record) }.map_err(err)?;
    Ok(report.final_state.state_hash())
}

#[pyfunction]
fn compute_baseline(samples: Vec<f64>) -> PyResult<f64> {
    calmplay_core::compute_baseline(&samples).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (baseline, pivot=calmplay_core::adaptation::DEFAULT_PIVOT))]
fn make_threshold(baseline: f64, pivot: f64) -> f64 {
    calmplay_core::make_threshold(baseline, pivot)
}

#[pyfunction]
fn rm_anova<'py>(py: Python<'py>, rows: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    let r = analysis::rm_anova(&rows).map_err(err)?;
    let out = json_loads(py, serde_json::to_string(&r).map_err(err)?)?;
    out.set_item("f_stat", r.f_stat)?;
    Ok(out)
}

#[pyfunction]
fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    analysis::special::f_upper_tail(f, d1, d2)
}

#[pyfunction]
fn score_panas(positive: Vec<u8>, negative: Vec<u8>) -> PyResult<(u32, u32)> {
    let s = analysis::score_panas(&PanasResponse { positive_items: positive, negative_items: negative }).map_err(err)?;
    Ok((s.positive_affect, s.negative_affect))
}

/// `items` is a list of (construct, value) pairs; returns construct name to mean.
#[pyfunction]
fn score_pxi<'py>(py: Python<'py>, items: Vec<(String, i8)>) -> PyResult<Bound<'py, PyDict>> {
    let items = items.into_iter().map(|(construct, value)| PxiItem { construct, value }).collect();
    let s = analysis::score_pxi(&PxiResponse { items }).map_err(err)?;
    let d = PyDict::new(py);
    for (c, v) in &s.constructs {
        d.set_item(c.name(), v)?;
    }
    Ok(d)
}

#[pyfunction]
fn cardiac_reactivity(baseline: f64, samples: Vec<f64>) -> PyResult<f64> {
    Ok(analysis::cardiac_reactivity(baseline, &samples).map_err(err)?.reactivity_bpm)
}

#[pyfunction]
fn latin_square_orders(k: usize, n: usize) -> Vec<Vec<usize>> {
    analysis::latin_square_orders(k, n)
}

/// Runs a bot-played session and returns its JSONL log.
/// `hr_profile` is a list of (from_s, bpm); "stress" selects the built-in stress model.
#[pyfunction]
#[pyo3(signature = (level_id, seed, skill=1.0, hr_profile=None, stress=false, max_seconds=300.0))]
fn run_headless(
    level_id: u8,
    seed: u64,
    skill: f64,
    hr_profile: Option<Vec<(f64, f64)>>,
    stress: bool,
    max_seconds: f64,
) -> PyResult<String> {
    let header = SessionHeader::new(format!("py-L{level_id}-s{seed}"), level(level_id)?, CoreConfig::default(), seed);
    let source = match (hr_profile, stress) {
        (Some(_), true) => return Err(PyValueError::new_err("pass either hr_profile or stress")),
        (Some(points), false) => {
            let json: Vec<_> = points.iter().map(|(t, b)| serde_json::json!({ "from_s": t, "bpm": b })).collect();
            let profile: ScriptedProfile = serde_json::from_value(serde_json::Value::Array(json)).map_err(err)?;
            HrSource::Scripted(profile)
        }
        (None, true) => HrSource::Stress(StressModel { rng_seed: seed, ..StressModel::default() }),
        (None, false) => HrSource::None,
    };
    let bot = BotPilot { skill, ..BotPilot::perfect(seed) };
    let opts = HeadlessOptions { max_seconds, ..HeadlessOptions::default() };
    let record = calmplay_core::run_headless(header, bot, source, &opts).map_err(err)?;
    Ok(record.to_jsonl())
}

#[pymodule]
fn calmplay(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<GameConfig>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(replay_jsonl, m)?)?;
    m.add_function(wrap_pyfunction!(compute_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(make_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(rm_anova, m)?)?;
    m.add_function(wrap_pyfunction!(f_upper_tail, m)?)?;
    m.add_function(wrap_pyfunction!(score_panas, m)?)?;
    m.add_function(wrap_pyfunction!(score_pxi, m)?)?;
    m.add_function(wrap_pyfunction!(cardiac_reactivity, m)?)?;
    m.add_function(wrap_pyfunction!(latin_square_orders, m)?)?;
    m.add_function(wrap_pyfunction!(run_headless, m)?)?;
    Ok(())
}
