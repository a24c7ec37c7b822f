use std::path::{Path, PathBuf};

use calmplay_core::hrsim::run_headless_with;
use calmplay_core::{
    BotPilot, GameConfig, HeadlessOptions, HrSource, LevelSpec, ScriptedProfile, SessionHeader, SessionWriter,
    StressModel,
};
use serde_json::json;

use crate::table::{num, Table};
use crate::{CliError, Report};

#[derive(Debug, Clone, clap::Args)]
pub struct SimArgs {
    #[arg(long)]
    pub level: u8,
    /// 1.0 never misses a needed flap.
    #[arg(long, default_value_t = 1.0)]
    pub skill: f64,
    /// Ticks of look-ahead lag in the bot's decisions.
    #[arg(long, default_value_t = 0)]
    pub reaction_delay: u32,
    /// Standard deviation of the bot's aim point, in world units.
    #[arg(long, default_value_t = 0.0)]
    pub aim_noise: f64,
    /// Scripted heart-rate profile: JSON list of {"from_s", "bpm"}.
    #[arg(long, conflicts_with = "stress_model")]
    pub hr_profile: Option<PathBuf>,
    /// Stress-response model JSON; use "default" for the built-in parameters.
    #[arg(long)]
    pub stress_model: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Consecutive sessions to run; seeds and ordinals count up from the first.
    #[arg(long, default_value_t = 1)]
    pub sessions: u32,
    #[arg(long)]
    pub participant: Option<String>,
    /// Game configuration JSON; defaults to the built-in tuning.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub sample_hz: f64,
    #[arg(long, default_value_t = 300.0)]
    pub max_seconds: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn hr_source(args: &SimArgs, session_seed: u64) -> Result<HrSource, CliError> {
    if let Some(p) = &args.hr_profile {
        return Ok(HrSource::Scripted(ScriptedProfile::load(p)?));
    }
    match args.stress_model.as_deref() {
        None => Ok(HrSource::None),
        Some("default") => Ok(HrSource::Stress(StressModel { rng_seed: session_seed, ..StressModel::default() })),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut m: StressModel = serde_json::from_str(&text)?;
            m.rng_seed ^= session_seed;
            Ok(HrSource::Stress(m))
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<GameConfig, CliError> {
    match path {
        None => Ok(GameConfig::default()),
        Some(p) => {
            let cfg: GameConfig = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            cfg.validate().map_err(|e| CliError::Input(e.to_string()))?;
            Ok(cfg)
        }
    }
}

pub fn run(args: &SimArgs) -> Result<Report, CliError> {
    let level = LevelSpec::level(args.level).map_err(|e| CliError::Input(e.to_string()))?;
    let config = load_config(args.config.as_deref())?;
    std::fs::create_dir_all(&args.out)?;
    let opts = HeadlessOptions { sample_hz: args.sample_hz, max_seconds: args.max_seconds, ..HeadlessOptions::default() };
    let mut table = Table::new(["session", "seed", "end", "duration_s", "score", "hr_samples", "file"]);
    let mut rows = Vec::new();
    for k in 0..args.sessions {
        let seed = args.seed.wrapping_add(u64::from(k));
        let id = match &args.participant {
            Some(p) => format!("{p}-L{}-{}", args.level, k + 1),
            None => format!("sim-L{}-s{seed}", args.level),
        };
        let mut header = SessionHeader::new(&id, level, config.clone(), seed);
        header.participant = args.participant.clone();
        header.ordinal = Some(k + 1);
        let path = args.out.join(format!("{id}.jsonl"));
        let writer = SessionWriter::create(header, &path, false)?;
        let bot = BotPilot { skill: args.skill, reaction_delay: args.reaction_delay, aim_noise_sd: args.aim_noise, rng_seed: seed };
        let record = run_headless_with(writer, bot, hr_source(args, seed)?, &opts)?;
        let out = record.outcome().expect("headless sessions always finish");
        let samples = record.gameplay_bpm().len();
        table.row([
            id.clone(),
            seed.to_string(),
            format!("{:?}", out.reason),
            num(out.duration_s, 2),
            out.final_score.to_string(),
            samples.to_string(),
            path.display().to_string(),
        ]);
        rows.push(json!({
            "session_id": id,
            "seed": seed,
            "reason": out.reason,
            "duration_s": out.duration_s,
            "final_score": out.final_score,
            "hr_samples": samples,
            "file": path,
        }));
    }
    Ok(Report { json: json!({ "sessions": rows }), table: table.render() })
}
