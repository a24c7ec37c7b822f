mod analyze;
mod record;
mod sim;
mod table;

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use calmplay_core::GameConfig;
use calmplay_relay::{Relay, RelayConfig};
use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Sim(#[from] calmplay_core::hrsim::SimError),
    #[error(transparent)]
    Session(#[from] calmplay_core::SessionError),
}

/// Command output in both renderings.
pub struct Report {
    pub json: serde_json::Value,
    pub table: String,
}

#[derive(Parser)]
#[command(name = "calmplay", version, about = "Heart-rate adaptive game server and study tools")]
struct Cli {
    /// Print JSON instead of an aligned table.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the relay server.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        addr: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = 60)]
        tick_rate: u32,
        #[arg(long, default_value = "sessions")]
        log_dir: PathBuf,
        #[arg(long, default_value_t = 16)]
        max_sessions: usize,
        /// fsync each log line.
        #[arg(long)]
        durable: bool,
    },
    /// Inspect and verify session logs.
    Record {
        #[command(subcommand)]
        command: RecordCommand,
    },
    /// Headless simulation.
    Sim {
        #[command(subcommand)]
        command: SimCommand,
    },
    /// Study analysis.
    Analyze {
        #[command(subcommand)]
        command: AnalyzeCommand,
    },
}

#[derive(Subcommand)]
enum RecordCommand {
    /// List session logs in a directory.
    Ls {
        #[arg(default_value = "sessions")]
        dir: PathBuf,
    },
    /// Replay one log and check every checkpoint.
    Replay { file: PathBuf },
    /// Replay every log in a directory.
    Verify { dir: PathBuf },
}

#[derive(Subcommand)]
enum SimCommand {
    /// Run bot-played sessions and write their logs.
    Run(sim::SimArgs),
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// PANAS positive/negative affect per respondent.
    Panas { csv: PathBuf },
    /// PXI construct means per respondent (long format CSV).
    Pxi { csv: PathBuf },
    /// Cardiac reactivity per participant and level.
    Cr { session_dir: PathBuf },
    /// One-way repeated-measures ANOVA.
    Anova {
        csv: PathBuf,
        #[arg(long, value_enum, default_value = "rows")]
        subjects: analyze::Axis,
        #[arg(long, value_enum, default_value = "cols")]
        conditions: analyze::Axis,
    },
    /// Counterbalanced play orders.
    Orders {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        n: usize,
    },
}

fn emit(report: &Report, json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(&report.json).expect("serializable"));
    } else {
        print!("{}", report.table);
    }
}

fn serve(addr: SocketAddr, tick_rate: u32, log_dir: PathBuf, max_sessions: usize, durable: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(&log_dir)?;
    let game = GameConfig { tick_rate, ..GameConfig::default() };
    let relay = Relay::new(RelayConfig { game, log_dir: Some(log_dir), max_sessions, durable, ..RelayConfig::default() })
        .map_err(|e| CliError::Input(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(calmplay_relay::serve(relay, addr))?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let report = match cli.command {
        Command::Serve { addr, port, tick_rate, log_dir, max_sessions, durable } => {
            serve(SocketAddr::new(addr, port), tick_rate, log_dir, max_sessions, durable)?;
            return Ok(true);
        }
        Command::Record { command } => match command {
            RecordCommand::Ls { dir } => record::ls(&dir)?,
            RecordCommand::Replay { file } => {
                let v = record::replay_file(&file)?;
                emit(&v.report, cli.json);
                return Ok(v.ok);
            }
            RecordCommand::Verify { dir } => {
                let v = record::verify_dir(&dir)?;
                emit(&v.report, cli.json);
                return Ok(v.ok);
            }
        },
        Command::Sim { command: SimCommand::Run(args) } => sim::run(&args)?,
        Command::Analyze { command } => match command {
            AnalyzeCommand::Panas { csv } => analyze::panas(&csv)?,
            AnalyzeCommand::Pxi { csv } => analyze::pxi(&csv)?,
            AnalyzeCommand::Cr { session_dir } => analyze::cr(&session_dir)?,
            AnalyzeCommand::Anova { csv, subjects, conditions } => analyze::anova(&csv, subjects, conditions)?,
            AnalyzeCommand::Orders { k, n } => analyze::orders(k, n)?,
        },
    };
    emit(&report, cli.json);
    Ok(true)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
