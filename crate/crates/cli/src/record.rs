use std::path::{Path, PathBuf};

use calmplay_core::session::replay_prefix;
use calmplay_core::{replay, SessionRecord};
use serde_json::json;

use crate::table::{num, Table};
use crate::{CliError, Report};

pub fn session_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".jsonl") && !name.ends_with(".questionnaires.jsonl")
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Reads every log in `dir`, tolerating a torn final line. Unreadable files are reported, not fatal.
pub fn load_dir(dir: &Path) -> Result<(Vec<SessionRecord>, Vec<String>), CliError> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for path in session_files(dir)? {
        match SessionRecord::read_lenient(&path) {
            Ok((r, _)) => records.push(r),
            Err(e) => skipped.push(format!("{}: {e}", path.display())),
        }
    }
    Ok((records, skipped))
}

pub fn ls(dir: &Path) -> Result<Report, CliError> {
    let mut table =
        Table::new(["file", "session", "participant", "level", "ordinal", "seed", "end", "duration_s", "score"]);
    let mut rows = Vec::new();
    for path in session_files(dir)? {
        let file = path.file_name().unwrap().to_string_lossy().to_string();
        match SessionRecord::read_lenient(&path) {
            Ok((r, truncated)) => {
                let h = &r.header;
                let out = r.outcome();
                let end = match (&out, truncated) {
                    (Some(o), _) => format!("{:?}", o.reason),
                    (None, true) => "truncated".into(),
                    (None, false) => "open".into(),
                };
                table.row([
                    file.clone(),
                    h.session_id.clone(),
                    h.participant.clone().unwrap_or_else(|| "-".into()),
                    h.level.level_id.to_string(),
                    h.ordinal.map_or_else(|| "-".into(), |o| o.to_string()),
                    h.seed.to_string(),
                    end.clone(),
                    out.map_or_else(|| "-".into(), |o| num(o.duration_s, 2)),
                    out.map_or_else(|| "-".into(), |o| o.final_score.to_string()),
                ]);
                rows.push(json!({
                    "file": file,
                    "session_id": h.session_id,
                    "participant": h.participant,
                    "level": h.level.level_id,
                    "ordinal": h.ordinal,
                    "seed": h.seed,
                    "end": end,
                    "duration_s": out.map(|o| o.duration_s),
                    "final_score": out.map(|o| o.final_score),
                    "events": r.events.len(),
                }));
            }
            Err(e) => {
                table.row([file.clone(), format!("unreadable: {e}")]);
                rows.push(json!({ "file": file, "error": e.to_string() }));
            }
        }
    }
    Ok(Report { json: json!({ "sessions": rows }), table: table.render() })
}

pub struct Verified {
    pub report: Report,
    pub ok: bool,
}

fn verify_one(path: &Path) -> (bool, serde_json::Value, Vec<String>) {
    let file = path.display().to_string();
    let (record, truncated) = match SessionRecord::read_lenient(path) {
        Ok(x) => x,
        Err(e) => {
            let msg = e.to_string();
            return (false, json!({ "file": file, "status": "unreadable", "detail": msg }), vec![file, "unreadable".into(), "-".into(), "-".into(), msg]);
        }
    };
    let finalized = record.is_finalized();
    let result = if finalized { replay(&record) } else { replay_prefix(&record) };
    let checkpoints = record.hash_trace().len();
    match result {
        Ok(rep) => {
            let status = if finalized {
                "ok"
            } else if truncated {
                "truncated"
            } else {
                "incomplete"
            };
            let detail = match record.outcome() {
                Some(o) => format!("{:?} at {:.2} s, score {}", o.reason, o.duration_s, o.final_score),
                None => format!("verified through tick {}", rep.trace.last().map_or(0, |t| t.0)),
            };
            (
                finalized,
                json!({
                    "file": file,
                    "status": status,
                    "checkpoints": checkpoints,
                    "final_tick": rep.final_state.tick,
                    "final_hash": format!("{:016x}", rep.final_state.state_hash()),
                    "detail": detail,
                }),
                vec![file, status.into(), checkpoints.to_string(), rep.final_state.tick.to_string(), detail],
            )
        }
        Err(e) => {
            let msg = e.to_string();
            (
                false,
                json!({ "file": file, "status": "diverged", "checkpoints": checkpoints, "detail": msg }),
                vec![file, "diverged".into(), checkpoints.to_string(), "-".into(), msg],
            )
        }
    }
}

pub fn replay_file(path: &Path) -> Result<Verified, CliError> {
    if !path.is_file() {
        return Err(CliError::Input(format!("{} is not a file", path.display())));
    }
    let (ok, json, cells) = verify_one(path);
    let mut table = Table::new(["file", "status", "checkpoints", "final_tick", "detail"]);
    table.row(cells);
    Ok(Verified { report: Report { json, table: table.render() }, ok })
}

pub fn verify_dir(dir: &Path) -> Result<Verified, CliError> {
    let mut table = Table::new(["file", "status", "checkpoints", "final_tick", "detail"]);
    let mut rows = Vec::new();
    let mut all_ok = true;
    let files = session_files(dir)?;
    for path in &files {
        let (ok, json, cells) = verify_one(path);
        all_ok &= ok;
        table.row(cells);
        rows.push(json);
    }
    let passed = rows.iter().filter(|r| r["status"] == "ok").count();
    let mut text = table.render();
    text.push_str(&format!("{passed}/{} sessions verified\n", files.len()));
    Ok(Verified {
        report: Report { json: json!({ "sessions": rows, "verified": passed, "total": files.len() }), table: text },
        ok: all_ok,
    })
}
