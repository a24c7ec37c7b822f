use std::collections::BTreeMap;
use std::path::Path;

use calmplay_core::analysis::{
    cardiac_reactivity, latin_square_orders, order_label, position_counts, rm_anova, score_panas, score_pxi,
    PanasResponse, PxiConstruct, PxiItem, PxiResponse, ALPHA, PANAS_ITEMS,
};
use calmplay_core::{select_stressor_window, SessionRecord, WindowPolicy};
use serde::Serialize;
use serde_json::json;

use crate::record::load_dir;
use crate::table::{num, opt, Table};
use crate::{CliError, Report};

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_path(path)?)
}

fn parse_cell<T: std::str::FromStr>(cell: &str, row: usize, col: &str) -> Result<T, CliError> {
    cell.parse().map_err(|_| CliError::Input(format!("row {row}, column {col}: cannot parse {cell:?}")))
}

/// `respondent,pa1..pa10,na1..na10`; item columns are recognised by their `pa`/`na` prefix.
pub fn panas(path: &Path) -> Result<Report, CliError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let cols = |prefix: &str| -> Vec<usize> {
        headers
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, h)| h.to_ascii_lowercase().starts_with(prefix))
            .map(|(i, _)| i)
            .collect()
    };
    let (pa, na) = (cols("pa"), cols("na"));
    if pa.len() != PANAS_ITEMS || na.len() != PANAS_ITEMS {
        return Err(CliError::Input(format!(
            "expected {PANAS_ITEMS} pa* and {PANAS_ITEMS} na* columns, found {} and {}",
            pa.len(),
            na.len()
        )));
    }
    let mut rows = Vec::new();
    let mut table = Table::new(["respondent", "positive_affect", "negative_affect"]);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let pick = |idx: &[usize]| -> Result<Vec<u8>, CliError> {
            idx.iter().map(|&j| parse_cell(&rec[j], line, &headers[j])).collect()
        };
        let response = PanasResponse { positive_items: pick(&pa)?, negative_items: pick(&na)? };
        let score = score_panas(&response).map_err(|e| CliError::Input(format!("row {line}: {e}")))?;
        table.row([rec[0].to_string(), score.positive_affect.to_string(), score.negative_affect.to_string()]);
        rows.push(json!({ "respondent": &rec[0], "positive_affect": score.positive_affect, "negative_affect": score.negative_affect }));
    }
    Ok(Report { json: json!({ "instrument": "panas", "respondents": rows }), table: table.render() })
}

/// Long format: `respondent,construct,value`, one row per item.
pub fn pxi(path: &Path) -> Result<Report, CliError> {
    let mut rdr = reader(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut items: BTreeMap<String, Vec<PxiItem>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(CliError::Input(format!("row {}: expected respondent,construct,value", i + 2)));
        }
        let who = rec[0].to_string();
        if !items.contains_key(&who) {
            order.push(who.clone());
        }
        let value = parse_cell(&rec[2], i + 2, "value")?;
        items.entry(who).or_default().push(PxiItem { construct: rec[1].to_string(), value });
    }
    let mut headers = vec!["respondent".to_string()];
    headers.extend(PxiConstruct::ALL.iter().map(|c| c.name().to_string()));
    headers.push("unscored".into());
    let mut table = Table::new(headers);
    let mut rows = Vec::new();
    for who in order {
        let response = PxiResponse { items: items.remove(&who).unwrap_or_default() };
        let score = score_pxi(&response).map_err(|e| CliError::Input(format!("respondent {who}: {e}")))?;
        let mut cells = vec![who.clone()];
        cells.extend(PxiConstruct::ALL.iter().map(|c| num(score.get(*c), 2)));
        cells.push(score.unscored.len().to_string());
        table.row(cells);
        let constructs: BTreeMap<&str, f64> = score.constructs.iter().map(|(c, v)| (c.name(), *v)).collect();
        rows.push(json!({ "respondent": who, "constructs": constructs, "unscored": score.unscored }));
    }
    Ok(Report { json: json!({ "instrument": "pxi", "respondents": rows }), table: table.render() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    Rows,
    Cols,
}

/// Reads a labelled matrix. With subjects as rows the first column holds subject ids and the
/// header holds condition names; with subjects as columns the layout is transposed.
pub fn anova(path: &Path, subjects: Axis, conditions: Axis) -> Result<Report, CliError> {
    if subjects == conditions {
        return Err(CliError::Input("--subjects and --conditions must name different axes".into()));
    }
    let mut rdr = reader(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut labels = Vec::new();
    let mut grid: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        labels.push(rec[0].to_string());
        grid.push(
            rec.iter()
                .enumerate()
                .skip(1)
                .map(|(j, c)| parse_cell(c, i + 2, &headers[j - 1]))
                .collect::<Result<_, _>>()?,
        );
    }
    let (matrix, subject_ids, condition_names) = match subjects {
        Axis::Rows => (grid, labels, headers),
        Axis::Cols => {
            let t = (0..headers.len()).map(|j| grid.iter().map(|r| r[j]).collect()).collect();
            (t, headers, labels)
        }
    };
    let r = rm_anova(&matrix).map_err(|e| CliError::Input(e.to_string()))?;

    let mut table = Table::new(["source", "SS", "df", "MS", "F", "p"]);
    let ms = |ss: f64, df: usize| ss / df as f64;
    table.row([
        "condition".to_string(),
        num(r.ss_condition, 4),
        r.df_condition.to_string(),
        num(ms(r.ss_condition, r.df_condition), 4),
        num(r.f_stat, 4),
        format!("{:.6}", r.p_value),
    ]);
    table.row([
        "subject".to_string(),
        num(r.ss_subject, 4),
        (r.n_subjects - 1).to_string(),
        num(ms(r.ss_subject, r.n_subjects - 1), 4),
        String::new(),
        String::new(),
    ]);
    table.row([
        "error".to_string(),
        num(r.ss_error, 4),
        r.df_error.to_string(),
        num(ms(r.ss_error, r.df_error), 4),
        String::new(),
        String::new(),
    ]);
    table.row([
        "total".to_string(),
        num(r.ss_total, 4),
        (r.n_subjects * r.k_conditions - 1).to_string(),
        String::new(),
        String::new(),
        String::new(),
    ]);
    let mut means = Table::new(["condition", "mean"]);
    for (name, m) in condition_names.iter().zip(&r.condition_means) {
        means.row([name.clone(), num(*m, 4)]);
    }
    let verdict = format!(
        "F({}, {}) = {}, p = {:.6} ({} at alpha {ALPHA})\n",
        r.df_condition,
        r.df_error,
        num(r.f_stat, 4),
        r.p_value,
        if r.significant(ALPHA) { "significant" } else { "not significant" }
    );
    let f_json = if r.f_stat.is_finite() { json!(r.f_stat) } else { json!("inf") };
    Ok(Report {
        json: json!({
            "subjects": subject_ids,
            "conditions": condition_names,
            "result": r,
            "f_stat": f_json,
            "alpha": ALPHA,
            "significant": r.significant(ALPHA),
        }),
        table: format!("{}\n{}\n{verdict}", table.render(), means.render()),
    })
}

#[derive(Debug, Serialize)]
struct CrRow {
    participant: String,
    level: u8,
    sessions: Vec<String>,
    baseline_bpm: Option<f64>,
    stressor_mean_bpm: Option<f64>,
    reactivity_bpm: Option<f64>,
    samples: usize,
    warnings: Vec<String>,
    error: Option<String>,
}

/// Groups session logs by participant and level, in play order, and computes reactivity
/// over the stressor window of each group.
pub fn cr(dir: &Path) -> Result<Report, CliError> {
    let (records, mut skipped) = load_dir(dir)?;
    let mut groups: BTreeMap<(String, u8), Vec<SessionRecord>> = BTreeMap::new();
    for r in records {
        if !r.is_finalized() {
            skipped.push(format!("{}: not finalized", r.header.session_id));
            continue;
        }
        let who = r.header.participant.clone().unwrap_or_else(|| "unknown".into());
        groups.entry((who, r.header.level.level_id)).or_default().push(r);
    }
    let mut rows = Vec::new();
    for ((participant, level), mut recs) in groups {
        recs.sort_by(|a, b| {
            (a.header.ordinal.unwrap_or(u32::MAX), &a.header.session_id)
                .cmp(&(b.header.ordinal.unwrap_or(u32::MAX), &b.header.session_id))
        });
        let sessions = recs.iter().map(|r| r.header.session_id.clone()).collect();
        let mut row = CrRow {
            participant,
            level,
            sessions,
            baseline_bpm: None,
            stressor_mean_bpm: None,
            reactivity_bpm: None,
            samples: 0,
            warnings: Vec::new(),
            error: None,
        };
        match select_stressor_window(&recs, WindowPolicy::default()) {
            Err(e) => row.error = Some(e.to_string()),
            Ok(w) => {
                row.samples = w.samples.len();
                row.warnings = w.warnings;
                row.baseline_bpm = w.baseline_bpm;
                match w.baseline_bpm {
                    None => row.error = Some("no baseline in the retained sessions".into()),
                    Some(b) => match cardiac_reactivity(b, &w.samples) {
                        Ok(c) => {
                            row.stressor_mean_bpm = Some(c.stressor_mean_bpm);
                            row.reactivity_bpm = Some(c.reactivity_bpm);
                        }
                        Err(e) => row.error = Some(e.to_string()),
                    },
                }
            }
        }
        rows.push(row);
    }
    let mut table = Table::new(["participant", "level", "baseline", "stressor_mean", "cr", "samples", "note"]);
    for r in &rows {
        let note = r.error.clone().unwrap_or_else(|| r.warnings.join("; "));
        table.row([
            r.participant.clone(),
            r.level.to_string(),
            opt(r.baseline_bpm, 2),
            opt(r.stressor_mean_bpm, 2),
            opt(r.reactivity_bpm, 2),
            r.samples.to_string(),
            note,
        ]);
    }
    let mut text = table.render();
    for s in &skipped {
        text.push_str(&format!("skipped {s}\n"));
    }
    Ok(Report { json: json!({ "groups": rows, "skipped": skipped }), table: text })
}

pub fn orders(k: usize, n: usize) -> Result<Report, CliError> {
    if k == 0 {
        return Err(CliError::Input("k must be at least 1".into()));
    }
    let orders = latin_square_orders(k, n);
    let counts = position_counts(&orders, k);
    let mut table = Table::new(["participant", "order"]);
    for (p, o) in orders.iter().enumerate() {
        table.row([format!("P{:02}", p + 1), order_label(o)]);
    }
    let mut headers = vec!["condition".to_string()];
    headers.extend((1..=k).map(|i| format!("pos{i}")));
    let mut balance = Table::new(headers);
    for (c, row) in counts.iter().enumerate() {
        let mut cells = vec![order_label(&[c])];
        cells.extend(row.iter().map(|x| x.to_string()));
        balance.row(cells);
    }
    Ok(Report {
        json: json!({
            "k": k,
            "n": n,
            "orders": orders.iter().map(|o| o.iter().map(|c| c + 1).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "position_counts": counts,
        }),
        table: format!("{}\n{}", table.render(), balance.render()),
    })
}
