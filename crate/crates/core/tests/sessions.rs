use std::io::Write;

use calmplay_core::hrsim::{ProfilePoint, StressModel};
use calmplay_core::session::{replay_prefix, EventKind, StateDigest};
use calmplay_core::{
    init_session, replay, run_headless, select_stressor_window, AdaptKind, BotPilot, EndReason,
    GameConfig, HeadlessOptions, HrSample, HrSource, LevelSpec, LiveSession, ScriptedProfile,
    SessionError, SessionHeader, SessionRecord, SessionWriter, SpeedMultiplier, TickInput,
    WindowPolicy,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn header(id: &str, level: u8, seed: u64) -> SessionHeader {
    SessionHeader::new(id, LevelSpec::level(level).unwrap(), GameConfig::default(), seed)
}

fn short() -> HeadlessOptions {
    HeadlessOptions { max_seconds: 20.0, ..HeadlessOptions::default() }
}

fn breach_profile(at_s: f64) -> ScriptedProfile {
    ScriptedProfile::new(vec![
        ProfilePoint { from_s: 0.0, bpm: 72.0 },
        ProfilePoint { from_s: at_s, bpm: 95.0 },
    ])
    .unwrap()
}

#[test]
fn headless_sessions_replay_identically() {
    for seed in 0..100u64 {
        let level = 1 + (seed % 3) as u8;
        let bot = BotPilot { skill: 0.9 + 0.001 * seed as f64, reaction_delay: (seed % 4) as u32, aim_noise_sd: 6.0, rng_seed: seed };
        let source = match seed % 3 {
            0 => HrSource::Scripted(breach_profile(3.0 + (seed % 7) as f64)),
            1 => HrSource::Stress(StressModel { rng_seed: seed, ..StressModel::default() }),
            _ => HrSource::None,
        };
        let rec = run_headless(header(&format!("s{seed}"), level, seed), bot, source, &short()).unwrap();
        assert!(rec.is_finalized());
        let report = replay(&rec).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert_eq!(report.trace, rec.hash_trace());
    }
}

#[test]
fn same_arguments_same_record() {
    let run = || {
        run_headless(
            header("d", 2, 5),
            BotPilot { skill: 0.8, reaction_delay: 2, aim_noise_sd: 10.0, rng_seed: 5 },
            HrSource::Stress(StressModel { rng_seed: 5, ..StressModel::default() }),
            &short(),
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.hash_trace(), b.hash_trace());
    assert_eq!(a.to_jsonl(), b.to_jsonl());
}

#[test]
fn flipped_input_diverges_at_or_after_it() {
    let rec = run_headless(header("f", 1, 11), BotPilot::perfect(11), HrSource::None, &short()).unwrap();
    let (idx, t) = rec
        .events
        .iter()
        .enumerate()
        .filter(|(_, e)| matches!(e.kind, EventKind::Input { .. }))
        .map(|(i, e)| (i, e.t))
        .nth(40)
        .unwrap();
    let mut tampered = rec.clone();
    tampered.events[idx].kind = EventKind::Input { flap: false };
    match replay(&tampered) {
        Err(SessionError::Divergence { tick, .. }) => assert!(tick >= t, "{tick} < {t}"),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn tampered_hash_reports_its_tick() {
    let mut rec = run_headless(header("h", 1, 2), BotPilot::perfect(2), HrSource::None, &short()).unwrap();
    let idx = rec.events.iter().position(|e| e.t == 300 && matches!(e.kind, EventKind::StateHash { .. })).unwrap();
    rec.events[idx].kind = EventKind::StateHash { hash: StateDigest(1) };
    match replay(&rec) {
        Err(SessionError::Divergence { tick, .. }) => assert_eq!(tick, 300),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn scripted_breach_gives_one_enter_at_its_tick() {
    let rec = run_headless(
        header("b", 2, 4),
        BotPilot::perfect(4),
        HrSource::Scripted(breach_profile(10.0)),
        &short(),
    )
    .unwrap();
    let adapts: Vec<_> = rec
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Adapt { kind, .. } => Some((e.t, *kind)),
            _ => None,
        })
        .collect();
    assert_eq!(adapts, vec![(600, AdaptKind::BreachEnter)]);
    replay(&rec).unwrap();
}

#[test]
fn level_three_target_reached() {
    let opts = HeadlessOptions { max_seconds: 120.0, ..HeadlessOptions::default() };
    let rec = run_headless(
        header("t", 3, 8),
        BotPilot::perfect(8),
        HrSource::Scripted(ScriptedProfile::constant(70.0)),
        &opts,
    )
    .unwrap();
    let o = rec.outcome().unwrap();
    assert_eq!((o.reason, o.final_score), (EndReason::Success, 30));
}

#[test]
fn level_one_ignores_heart_rate() {
    let with = run_headless(
        header("w", 1, 21),
        BotPilot::perfect(21),
        HrSource::Scripted(breach_profile(2.0)),
        &short(),
    )
    .unwrap();
    let without = run_headless(header("w", 1, 21), BotPilot::perfect(21), HrSource::None, &short()).unwrap();
    assert_eq!(with.hash_trace(), without.hash_trace());
    assert!(with.events.iter().any(|e| matches!(e.kind, EventKind::Hr { .. })));
}

#[test]
fn adaptive_session_without_hr_matches_level_one() {
    let l2 = run_headless(header("g", 2, 13), BotPilot::perfect(13), HrSource::None, &short()).unwrap();
    let l1 = run_headless(header("g", 1, 13), BotPilot::perfect(13), HrSource::None, &short()).unwrap();
    assert_eq!(l2.hash_trace(), l1.hash_trace());
}

#[test]
fn multiplier_tracks_breach_state_every_tick() {
    let mut live = LiveSession::new(SessionWriter::in_memory(header("m", 2, 3))).unwrap();
    for i in 0..5 {
        live.ingest_hr(HrSample::new(i * 1000, 70.0, "w")).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut ts = 5000;
    let mut pilot = calmplay_core::Pilot::new(BotPilot::perfect(3)).unwrap();
    let mut min_factor = 1.0f64;
    while live.state().tick < 1800 && !live.is_ended() {
        if live.state().tick % 15 == 0 {
            ts += 250;
            live.ingest_hr(HrSample::new(ts, rng.random_range(65.0..85.0), "w")).unwrap();
        }
        let above = live.controller().adaptation().unwrap().above_threshold;
        assert_eq!(live.state().speed_multiplier == SpeedMultiplier::Reduced, above);
        min_factor = min_factor.min(live.state().speed_multiplier.factor());
        let input = pilot.decide(live.state());
        live.tick(input).unwrap();
    }
    assert_eq!(min_factor, 0.7);
    let a = live.controller().adaptation().unwrap();
    let enters = a.events.iter().filter(|e| e.kind == AdaptKind::BreachEnter).count();
    assert_eq!(enters as u32, a.breach_count);
    for pair in a.events.windows(2) {
        assert_ne!(pair[0].kind, pair[1].kind);
    }
    assert_eq!(a.events.first().map(|e| e.kind), Some(AdaptKind::BreachEnter));
}

#[test]
fn crash_mid_session_replays_up_to_last_flush() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("crash.jsonl");
    let writer = SessionWriter::create(header("c", 2, 6), &path, false).unwrap();
    let mut live = LiveSession::new(writer).unwrap();
    for i in 0..5 {
        live.ingest_hr(HrSample::new(i * 1000, 72.0, "w")).unwrap();
    }
    let mut pilot = calmplay_core::Pilot::new(BotPilot::perfect(6)).unwrap();
    for _ in 0..400 {
        let input = pilot.decide(live.state());
        live.tick(input).unwrap();
    }
    drop(live);
    // a torn final line as left by power loss during a write
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    write!(f, "{{\"t\":401,\"kind\":\"Inp").unwrap();
    drop(f);

    assert!(SessionRecord::read(&path).is_err());
    let (prefix, truncated) = SessionRecord::read_lenient(&path).unwrap();
    assert!(truncated);
    assert!(!prefix.is_finalized());
    assert!(matches!(replay(&prefix), Err(SessionError::NotFinalized)));
    let report = replay_prefix(&prefix).unwrap();
    assert_eq!(report.trace.len(), 6);
    assert_eq!(report.trace.last().unwrap().0, 360);
    assert_eq!(report.final_state.tick, prefix.events.last().unwrap().t);
}

#[test]
fn file_and_memory_logs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    let writer = SessionWriter::create(header("x", 3, 1), &path, true).unwrap();
    let from_file = calmplay_core::hrsim::run_headless_with(
        writer,
        BotPilot::perfect(1),
        HrSource::Scripted(breach_profile(5.0)),
        &HeadlessOptions { max_seconds: 15.0, ..HeadlessOptions::default() },
    )
    .unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, from_file.to_jsonl());
    let parsed = SessionRecord::read(&path).unwrap();
    assert_eq!(parsed, from_file);
}

fn played(level: u8, seed: u64, bpm: f64) -> SessionRecord {
    run_headless(
        header(&format!("p{seed}"), level, seed),
        BotPilot::perfect(seed),
        HrSource::Scripted(ScriptedProfile::constant(bpm)),
        &HeadlessOptions { max_seconds: 6.0, ..HeadlessOptions::default() },
    )
    .unwrap()
}

#[test]
fn stressor_window_drops_first_session() {
    let sessions = [played(2, 1, 111.0), played(2, 2, 80.0), played(2, 3, 90.0)];
    let w = select_stressor_window(&sessions, WindowPolicy::default()).unwrap();
    let mut expected = sessions[1].gameplay_bpm();
    expected.extend(sessions[2].gameplay_bpm());
    assert_eq!(w.samples, expected);
    assert!(!w.samples.contains(&111.0));
    assert_eq!(w.baseline_bpm, Some(80.0));
    assert!(w.warnings.is_empty());
}

#[test]
fn stressor_window_warns_on_empty_session() {
    let mut empty = played(2, 2, 80.0);
    empty.events.retain(|e| !matches!(e.kind, EventKind::Hr { baseline: false, .. }));
    let sessions = [played(2, 1, 70.0), empty, played(2, 3, 90.0)];
    let w = select_stressor_window(&sessions, WindowPolicy::default()).unwrap();
    assert_eq!(w.samples, sessions[2].gameplay_bpm());
    assert_eq!(w.warnings.len(), 1);
}

#[test]
fn random_state_pairs_do_not_collide() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let base = init_session(GameConfig::default(), LevelSpec::level(2).unwrap(), 0).unwrap();
    let mut seen = std::collections::HashSet::new();
    for _ in 0..10_000 {
        let mut a = base.clone();
        a.rng_seed = rng.random();
        a.bird_y = rng.random_range(0.0..640.0);
        a.score = rng.random_range(0..1000);
        let mut b = a.clone();
        b.score += rng.random_range(1..50);
        assert_ne!(a.state_hash(), b.state_hash());
        seen.insert(a.state_hash());
    }
    assert_eq!(seen.len(), 10_000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn replay_reproduces_any_input_sequence(seed in any::<u64>(), flaps in prop::collection::vec(any::<bool>(), 1..900)) {
        let mut live = LiveSession::new(SessionWriter::in_memory(header("r", 1, seed))).unwrap();
        let mut states = Vec::new();
        for &flap in &flaps {
            if live.is_ended() { break; }
            live.tick(TickInput { flap }).unwrap();
            states.push(live.state().state_hash());
        }
        live.abort().unwrap();
        let rec = live.into_record();
        let report = replay(&rec).unwrap();
        prop_assert_eq!(report.trace, rec.hash_trace());
        let again = SessionRecord::from_jsonl(&rec.to_jsonl()).unwrap();
        prop_assert_eq!(again.to_jsonl(), rec.to_jsonl());
    }

    #[test]
    fn score_equals_recount_and_never_drops(seed in any::<u64>(), skill in 0.6f64..1.0) {
        let mut s = init_session(GameConfig::default(), LevelSpec::level(1).unwrap(), seed).unwrap();
        let mut pilot = calmplay_core::Pilot::new(BotPilot { skill, reaction_delay: 1, aim_noise_sd: 8.0, rng_seed: seed }).unwrap();
        let mut passed = std::collections::BTreeSet::new();
        let mut last_score = 0;
        for _ in 0..1800 {
            if s.is_ended() { break; }
            let input = pilot.decide(&s);
            let ev = s.advance(input);
            for p in ev.passed { prop_assert!(passed.insert(p.index)); }
            prop_assert!(s.score >= last_score);
            last_score = s.score;
            prop_assert_eq!(s.score as usize, passed.len());
            for p in &s.pillars {
                prop_assert_eq!(p.scored, passed.contains(&p.index));
            }
        }
    }

    #[test]
    fn nominal_speed_monotone(v0 in 10.0f64..200.0, factor in 1.0f64..1.5, cap_mult in 1.0f64..4.0) {
        let cfg = GameConfig { initial_pillar_speed: v0, speed_growth_factor: factor, speed_cap: v0 * cap_mult, ..GameConfig::default() };
        for i in 0..60 {
            let (a, b) = (cfg.nominal_speed(i), cfg.nominal_speed(i + 1));
            prop_assert!(b >= a);
            if b == a && factor > 1.0 { prop_assert_eq!(a, cfg.speed_cap); }
        }
    }
}
