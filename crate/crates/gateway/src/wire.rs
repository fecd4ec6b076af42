//! JSON messages exchanged with the trainer UI.
//!
//! Every message is `{"type": ..., "seq": n, "payload": {...}}`. Server
//! sequence numbers start at 1 and increase by one per connection; client
//! sequence numbers must increase strictly.

use std::collections::BTreeMap;

use purrfect_core::audio::StimulusDescriptor;
use purrfect_core::session::{Effect, FeedbackColor, Key, PhaseKind, QuestionnaireId};
use purrfect_stats::Q2Item;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::GatewayError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    PhaseChange,
    TrialStart,
    PlayStimulus,
    Response,
    Replay,
    Feedback,
    SessionDone,
    QuestionnairePrompt,
    QuestionnaireAnswer,
    SpatialPrompt,
    SpatialAnswer,
    Error,
    Ack,
}

impl MessageType {
    pub fn from_client(self) -> bool {
        matches!(
            self,
            MessageType::Response | MessageType::Replay | MessageType::SpatialAnswer | MessageType::QuestionnaireAnswer
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub seq: u64,
    #[serde(default)]
    pub payload: Value,
}

impl WireMessage {
    pub fn new(kind: MessageType, seq: u64, payload: Value) -> Self {
        WireMessage { kind, seq, payload }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct ResponsePayload {
    key: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct SpatialPayload {
    value: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct QuestionnairePayload {
    id: QuestionnaireId,
    answers: BTreeMap<String, Value>,
}

/// Client input after schema checks.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientInput {
    Response(Key),
    Replay,
    SpatialAnswer(f64),
    QuestionnaireAnswer { id: QuestionnaireId, answers: BTreeMap<String, Value> },
}

pub fn parse_client(text: &str) -> Result<(u64, ClientInput), GatewayError> {
    let violation = |m: String| GatewayError::ProtocolViolation(m);
    let msg: WireMessage = serde_json::from_str(text).map_err(|e| violation(e.to_string()))?;
    let payload = msg.payload.clone();
    let input = match msg.kind {
        MessageType::Response => {
            let p: ResponsePayload = serde_json::from_value(payload).map_err(|e| violation(format!("response: {e}")))?;
            ClientInput::Response(Key::parse(&p.key))
        }
        MessageType::Replay => ClientInput::Replay,
        MessageType::SpatialAnswer => {
            let p: SpatialPayload = serde_json::from_value(payload).map_err(|e| violation(format!("spatial_answer: {e}")))?;
            ClientInput::SpatialAnswer(p.value)
        }
        MessageType::QuestionnaireAnswer => {
            let p: QuestionnairePayload =
                serde_json::from_value(payload).map_err(|e| violation(format!("questionnaire_answer: {e}")))?;
            ClientInput::QuestionnaireAnswer { id: p.id, answers: p.answers }
        }
        other => return Err(violation(format!("{other:?} is a server message"))),
    };
    Ok((msg.seq, input))
}

pub fn wav_url(stimulus_id: &str) -> String {
    format!("/audio/{stimulus_id}.wav")
}

pub fn phase_change(index: usize, kind: PhaseKind, resumed: bool) -> (MessageType, Value) {
    (MessageType::PhaseChange, json!({ "index": index, "phase": kind, "resumed": resumed }))
}

pub fn play_stimulus(stimulus_id: &str, descriptor: &StimulusDescriptor) -> (MessageType, Value) {
    (
        MessageType::PlayStimulus,
        json!({ "stimulus_id": stimulus_id, "descriptor": descriptor, "wav_url": wav_url(stimulus_id) }),
    )
}

pub fn questionnaire_prompt(id: QuestionnaireId) -> (MessageType, Value) {
    let items: Vec<Value> = match id {
        QuestionnaireId::Q1 => vec![
            json!({ "key": "age", "question": "Age", "kind": "integer" }),
            json!({ "key": "music_experience_years", "question": "Years of musical training", "kind": "integer" }),
        ],
        QuestionnaireId::Q2 => Q2Item::ALL
            .iter()
            .map(|i| {
                let (low, high) = i.anchors();
                json!({ "key": i.key(), "label": i.label(), "question": i.question(), "scale": [1, 7], "anchors": [low, high] })
            })
            .collect(),
    };
    (MessageType::QuestionnairePrompt, json!({ "id": id, "items": items }))
}

pub fn error(code: &str, reason: &str, ref_seq: Option<u64>) -> (MessageType, Value) {
    (MessageType::Error, json!({ "code": code, "reason": reason, "ref": ref_seq }))
}

pub fn ack(ref_seq: u64) -> (MessageType, Value) {
    (MessageType::Ack, json!({ "ref": ref_seq }))
}

/// Client-facing form of an engine effect. Haptic commands, response-window
/// notices and storage effects have none.
pub fn from_effect(effect: &Effect, ref_seq: Option<u64>) -> Option<(MessageType, Value)> {
    Some(match effect {
        Effect::EnterPhase { index, kind } => phase_change(*index, *kind, false),
        Effect::StartTrial { phase, trial_index } => {
            (MessageType::TrialStart, json!({ "phase": phase, "trial_index": trial_index }))
        }
        Effect::PlayAudio { stimulus_id, descriptor } => play_stimulus(stimulus_id, descriptor),
        Effect::ShowFeedback { color, correct_degree } => (
            MessageType::Feedback,
            json!({ "color": color, "correct": *color == FeedbackColor::Green, "correct_degree": correct_degree }),
        ),
        Effect::PromptSpatial { trial_index } => (MessageType::SpatialPrompt, json!({ "trial_index": trial_index })),
        Effect::PromptQuestionnaire { id } => questionnaire_prompt(*id),
        Effect::Rejected { reason } => error("rejected", reason, ref_seq),
        Effect::EndSession => (MessageType::SessionDone, json!({})),
        Effect::SendHaptics { .. }
        | Effect::ResponseOpen { .. }
        | Effect::RecordTrial { .. }
        | Effect::RecordQuestionnaire { .. } => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use purrfect_core::haptic::HapticCommand;

    #[test]
    fn parses_client_messages() {
        let (seq, input) = parse_client(r#"{"type":"response","seq":4,"payload":{"key":"5"}}"#).unwrap();
        assert_eq!((seq, input), (4, ClientInput::Response(Key::Digit(5))));
        let (_, input) = parse_client(r#"{"type":"replay","seq":5}"#).unwrap();
        assert_eq!(input, ClientInput::Replay);
        let (_, input) = parse_client(r#"{"type":"spatial_answer","seq":6,"payload":{"value":3.5}}"#).unwrap();
        assert_eq!(input, ClientInput::SpatialAnswer(3.5));
        assert!(parse_client(r#"{"type":"feedback","seq":1,"payload":{}}"#).is_err());
        assert!(parse_client(r#"{"type":"response","seq":1,"payload":{}}"#).is_err());
        assert!(parse_client("not json").is_err());
    }

    #[test]
    fn haptics_never_reach_the_client() {
        let cmd = HapticCommand { module: 3, intensity: 200, duration_ms: 500, onset_ms: 0 };
        assert!(from_effect(&Effect::SendHaptics { commands: vec![cmd] }, None).is_none());
    }

    #[test]
    fn q2_prompt_lists_eight_items() {
        let (_, p) = questionnaire_prompt(QuestionnaireId::Q2);
        assert_eq!(p["items"].as_array().unwrap().len(), 8);
    }

    #[test]
    fn envelope_shape() {
        let m = WireMessage::new(MessageType::SessionDone, 9, json!({}));
        assert_eq!(m.to_text(), r#"{"type":"session_done","seq":9,"payload":{}}"#);
    }
}
