//! Prints time-to-target and survival statistics for the default physics.

use calmplay_core::{
    run_headless, BotPilot, GameConfig, HeadlessOptions, HrSource, LevelSpec, ScriptedProfile,
    SessionHeader,
};

fn main() {
    let config = GameConfig::default();
    let opts = HeadlessOptions { max_seconds: 120.0, ..HeadlessOptions::default() };
    let mut times = Vec::new();
    for seed in 0..20 {
        let header = SessionHeader::new(format!("cal-{seed}"), LevelSpec::level(3).unwrap(), config.clone(), seed);
        let rec = run_headless(header, BotPilot::perfect(seed), HrSource::Scripted(ScriptedProfile::constant(70.0)), &opts)
            .unwrap();
        let o = rec.outcome().unwrap();
        println!("level3 seed {seed:>3}: {:?} score {} at {:.2}s", o.reason, o.final_score, o.duration_s);
        times.push(o.duration_s);
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    println!("mean time to target: {mean:.2}s");

    let opts = HeadlessOptions { max_seconds: 60.0, ..HeadlessOptions::default() };
    let mut survived = 0;
    for seed in 0..100 {
        let header = SessionHeader::new(format!("l1-{seed}"), LevelSpec::level(1).unwrap(), config.clone(), seed);
        let rec = run_headless(header, BotPilot::perfect(seed), HrSource::None, &opts).unwrap();
        let o = rec.outcome().unwrap();
        if o.reason == calmplay_core::EndReason::Aborted {
            survived += 1;
        } else {
            println!("level1 seed {seed}: {:?} at {:.2}s", o.reason, o.duration_s);
        }
    }
    println!("level1 survived 60s: {survived}/100");
}
