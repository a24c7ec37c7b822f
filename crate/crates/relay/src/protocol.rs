//! Wire protocol: UTF-8 JSON text frames, one message per frame.
//!
//! Every message carries the session id and a per-sender sequence number;
//! the `type` field selects the body. `docs/wire-protocol.schema.json` is
//! the normative schema.

use calmplay_core::analysis::{
    score_panas, score_pxi, PanasResponse, PxiItem, PxiResponse, PANAS_ITEMS,
};
use calmplay_core::{EndReason, GameConfig, GameState, LevelSpec, Phase};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Sensor,
    Player,
    Observer,
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sensor" => Ok(Role::Sensor),
            "player" => Ok(Role::Player),
            "observer" => Ok(Role::Observer),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub session_id: String,
    pub seq: u64,
    #[serde(flatten)]
    pub body: Body,
}

pub const MESSAGE_TYPES: [&str; 8] =
    ["hr", "input", "state", "session_start", "session_end", "questionnaire", "ack", "error"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Body {
    /// Sensor → server. `ts` in milliseconds on the sensor's clock.
    Hr { ts: u64, bpm: f64 },
    /// Player → server. `tick` is the last tick the client rendered.
    Input { tick: u64, flap: bool },
    /// Server → player and observers, once per tick.
    State(StateFrame),
    /// Player → server opens the session; server → clients confirms it.
    SessionStart {
        level: LevelSpec,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<GameConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config_digest: Option<String>,
    },
    SessionEnd { reason: EndReason, duration_s: f64, final_score: u32 },
    Questionnaire { instrument: Instrument, items: Vec<QuestionnaireItem> },
    Ack {
        ack_seq: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dropped: Option<String>,
    },
    Error {
        code: ErrorCode,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ack_seq: Option<u64>,
    },
}

impl Body {
    pub fn type_name(&self) -> &'static str {
        match self {
            Body::Hr { .. } => "hr",
            Body::Input { .. } => "input",
            Body::State(_) => "state",
            Body::SessionStart { .. } => "session_start",
            Body::SessionEnd { .. } => "session_end",
            Body::Questionnaire { .. } => "questionnaire",
            Body::Ack { .. } => "ack",
            Body::Error { .. } => "error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Protocol,
    UnknownType,
    RoleMismatch,
    NoSession,
    SessionExists,
    SessionLimit,
    SessionEnded,
    BaselineIncomplete,
    InvalidQuestionnaire,
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instrument {
    Panas,
    Pxi,
}

/// PANAS items are bare integers (ten positive, then ten negative);
/// PXI items name their construct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuestionnaireItem {
    Value(i32),
    Construct { construct: String, value: i32 },
}

/// Validates a submission with the same rules the analysis pipeline scores by.
pub fn validate_questionnaire(instrument: Instrument, items: &[QuestionnaireItem]) -> Result<(), String> {
    match instrument {
        Instrument::Panas => {
            let values = items
                .iter()
                .map(|i| match i {
                    QuestionnaireItem::Value(v) => u8::try_from(*v).map_err(|_| format!("item value {v} out of range")),
                    QuestionnaireItem::Construct { .. } => Err("PANAS items must be integers".to_string()),
                })
                .collect::<Result<Vec<u8>, _>>()?;
            if values.len() != 2 * PANAS_ITEMS {
                return Err(format!("PANAS needs {} items, got {}", 2 * PANAS_ITEMS, values.len()));
            }
            let (pos, neg) = values.split_at(PANAS_ITEMS);
            score_panas(&PanasResponse { positive_items: pos.to_vec(), negative_items: neg.to_vec() })
                .map(|_| ())
                .map_err(|e| e.to_string())
        }
        Instrument::Pxi => {
            let items = items
                .iter()
                .map(|i| match i {
                    QuestionnaireItem::Construct { construct, value } => Ok(PxiItem {
                        construct: construct.clone(),
                        value: i8::try_from(*value).map_err(|_| format!("item value {value} out of range"))?,
                    }),
                    QuestionnaireItem::Value(_) => Err("PXI items must name their construct".to_string()),
                })
                .collect::<Result<Vec<_>, _>>()?;
            score_pxi(&PxiResponse { items }).map(|_| ()).map_err(|e| e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PillarFrame {
    pub index: u64,
    pub x: f64,
    pub gap_center_y: f64,
    pub gap_height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseFrame {
    Ready,
    Running,
    Ended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub tick: u64,
    pub bird_x: f64,
    pub bird_y: f64,
    pub bird_vy: f64,
    pub pillars: Vec<PillarFrame>,
    /// Only on levels that show a HUD.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<u32>,
    /// Only on adaptive levels, once the baseline is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub multiplier: f64,
    pub phase: PhaseFrame,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<EndReason>,
    /// Server-side state hash, hex.
    pub hash: String,
}

impl StateFrame {
    pub fn from_state(state: &GameState, level: &LevelSpec, threshold: Option<f64>) -> Self {
        let (phase, reason) = match state.phase {
            Phase::Ready => (PhaseFrame::Ready, None),
            Phase::Running => (PhaseFrame::Running, None),
            Phase::Ended(r) => (PhaseFrame::Ended, Some(r)),
        };
        Self {
            tick: state.tick,
            bird_x: state.bird_x,
            bird_y: state.bird_y,
            bird_vy: state.bird_vy,
            pillars: state
                .pillars
                .iter()
                .map(|p| PillarFrame { index: p.index, x: p.x, gap_center_y: p.gap_center_y, gap_height: p.gap_height })
                .collect(),
            score: level.show_score.then_some(state.score),
            threshold: if level.hr_adaptive { threshold } else { None },
            multiplier: state.speed_multiplier.factor(),
            phase,
            reason,
            hash: format!("{:016x}", state.state_hash()),
        }
    }
}

/// Parses an incoming text frame, separating unknown message types from malformed ones.
pub fn parse_frame(text: &str) -> Result<WireMessage, (ErrorCode, String)> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| (ErrorCode::Protocol, format!("invalid JSON: {e}")))?;
    match value.get("type").and_then(|t| t.as_str()) {
        None => return Err((ErrorCode::Protocol, "missing \"type\"".into())),
        Some(t) if !MESSAGE_TYPES.contains(&t) => {
            return Err((ErrorCode::UnknownType, format!("unknown message type {t:?}")))
        }
        _ => {}
    }
    serde_json::from_value(value).map_err(|e| (ErrorCode::Protocol, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use calmplay_core::init_session;

    #[test]
    fn level_one_frames_hide_hud() {
        let level = LevelSpec::level(1).unwrap();
        let s = init_session(GameConfig::default(), level, 1).unwrap();
        let frame = StateFrame::from_state(&s, &level, Some(79.0));
        let json = serde_json::to_string(&frame).unwrap();
        assert!(!json.contains("score"));
        assert!(!json.contains("threshold"));

        let l2 = LevelSpec::level(2).unwrap();
        let json = serde_json::to_string(&StateFrame::from_state(&s, &l2, Some(79.0))).unwrap();
        assert!(json.contains("\"score\":0"));
        assert!(json.contains("\"threshold\":79.0"));
    }

    #[test]
    fn frame_parsing() {
        let m = parse_frame(r#"{"session_id":"a","seq":1,"type":"hr","ts":5,"bpm":80.0}"#).unwrap();
        assert_eq!(m.body, Body::Hr { ts: 5, bpm: 80.0 });
        assert_eq!(parse_frame(r#"{"session_id":"a","seq":1,"type":"teleport"}"#).unwrap_err().0, ErrorCode::UnknownType);
        assert_eq!(parse_frame(r#"{"session_id":"a","seq":1,"type":"hr"}"#).unwrap_err().0, ErrorCode::Protocol);
        assert_eq!(parse_frame("not json").unwrap_err().0, ErrorCode::Protocol);
        let bad_level = r#"{"session_id":"a","seq":1,"type":"session_start","seed":1,
            "level":{"level_id":1,"show_score":true,"hr_adaptive":false}}"#;
        assert_eq!(parse_frame(bad_level).unwrap_err().0, ErrorCode::Protocol);
    }

    #[test]
    fn questionnaire_rules() {
        let all_one: Vec<_> = (0..20).map(|_| QuestionnaireItem::Value(1)).collect();
        assert!(validate_questionnaire(Instrument::Panas, &all_one).is_ok());
        assert!(validate_questionnaire(Instrument::Panas, &all_one[..19]).is_err());
        let mut pxi: Vec<_> = calmplay_core::analysis::PxiConstruct::ALL
            .iter()
            .flat_map(|c| (0..3).map(move |_| QuestionnaireItem::Construct { construct: c.name().into(), value: 0 }))
            .collect();
        assert!(validate_questionnaire(Instrument::Pxi, &pxi).is_ok());
        pxi[4] = QuestionnaireItem::Construct { construct: "Challenge".into(), value: 4 };
        assert!(validate_questionnaire(Instrument::Pxi, &pxi).is_err());
    }
}
