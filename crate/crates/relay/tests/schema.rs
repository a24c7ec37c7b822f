use calmplay_core::{init_session, EndReason, GameConfig, GameState, LevelSpec};
use calmplay_relay::protocol::{
    ErrorCode, Instrument, QuestionnaireItem, StateFrame, WireMessage, MESSAGE_TYPES,
};
use calmplay_relay::Body;
use serde_json::{json, Value};

fn validator() -> jsonschema::Validator {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/wire-protocol.schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn wire(body: Body) -> Value {
    serde_json::to_value(WireMessage { session_id: "s-1".into(), seq: 4, body }).unwrap()
}

fn running_state(level: u8) -> GameState {
    let mut s = init_session(GameConfig::default(), LevelSpec::level(level).unwrap(), 9).unwrap();
    for _ in 0..30 {
        s.advance(calmplay_core::TickInput { flap: false });
    }
    s
}

fn samples() -> Vec<Body> {
    let s = running_state(3);
    vec![
        Body::Hr { ts: 1000, bpm: 71.5 },
        Body::Input { tick: 12, flap: true },
        Body::State(StateFrame::from_state(&s, &LevelSpec::level(3).unwrap(), Some(79.0))),
        Body::State(StateFrame::from_state(&running_state(1), &LevelSpec::level(1).unwrap(), None)),
        Body::SessionStart { level: LevelSpec::level(2).unwrap(), seed: 5, config: None, config_digest: None },
        Body::SessionStart {
            level: LevelSpec::level(3).unwrap(),
            seed: 5,
            config: Some(GameConfig::default()),
            config_digest: Some(format!("{:016x}", GameConfig::default().digest())),
        },
        Body::SessionEnd { reason: EndReason::OutBottom, duration_s: 12.5, final_score: 3 },
        Body::Questionnaire { instrument: Instrument::Panas, items: vec![QuestionnaireItem::Value(3); 20] },
        Body::Questionnaire {
            instrument: Instrument::Pxi,
            items: vec![QuestionnaireItem::Construct { construct: "Mastery".into(), value: -2 }],
        },
        Body::Ack { ack_seq: 3, dropped: None },
        Body::Ack { ack_seq: 3, dropped: Some("stale sequence".into()) },
        Body::Error { code: ErrorCode::RoleMismatch, message: "no".into(), ack_seq: Some(2) },
    ]
}

#[test]
fn every_message_type_validates() {
    let v = validator();
    let mut seen = std::collections::BTreeSet::new();
    for body in samples() {
        seen.insert(body.type_name());
        let msg = wire(body);
        let errors: Vec<String> = v.iter_errors(&msg).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{msg}: {errors:?}");
    }
    assert_eq!(seen.len(), MESSAGE_TYPES.len());
}

#[test]
fn schema_type_list_matches_protocol() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/wire-protocol.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let listed: Vec<&str> =
        schema["properties"]["type"]["enum"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
    assert_eq!(listed, MESSAGE_TYPES);
}

#[test]
fn malformed_messages_fail_schema() {
    let v = validator();
    for bad in [
        json!({"session_id": "s", "seq": 1, "type": "hr", "ts": 5}),
        json!({"session_id": "s", "seq": -1, "type": "input", "tick": 1, "flap": true}),
        json!({"session_id": "bad id", "seq": 1, "type": "input", "tick": 1, "flap": true}),
        json!({"session_id": "s", "seq": 1, "type": "teleport"}),
        json!({"session_id": "s", "seq": 1, "type": "error", "code": "nope", "message": "x"}),
        json!({"seq": 1, "type": "ack", "ack_seq": 0}),
    ] {
        assert!(!v.is_valid(&bad), "{bad}");
    }
}
