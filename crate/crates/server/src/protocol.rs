//! Messages on the `/api/ws` connection. Both directions use the envelope
//! `{type, round, payload, seq}`; `seq` counts messages per connection and
//! direction.

use colex_core::engine::EngineError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub round: u32,
    #[serde(default)]
    pub payload: Value,
    #[serde(default)]
    pub seq: u64,
}

/// A parsed client message.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientEvent {
    Send { round: u32, signal: String },
    Guess { round: u32, meaning: String },
    Advance { round: u32 },
    FeedbackForm { text: String, took_notes: bool },
    Ping,
}

impl ClientEvent {
    pub fn parse(text: &str) -> Result<ClientEvent, String> {
        let env: Envelope = serde_json::from_str(text).map_err(|e| format!("bad envelope: {e}"))?;
        let field = |name: &str| {
            env.payload
                .get(name)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| format!("{} needs payload.{name}", env.kind))
        };
        Ok(match env.kind.as_str() {
            "send" => ClientEvent::Send {
                round: env.round,
                signal: field("signal")?,
            },
            "guess" => ClientEvent::Guess {
                round: env.round,
                meaning: field("meaning")?,
            },
            "advance" => ClientEvent::Advance { round: env.round },
            "feedback_form" => ClientEvent::FeedbackForm {
                text: field("text")?,
                took_notes: env.payload.get("took_notes").and_then(Value::as_bool).unwrap_or(false),
            },
            "ping" => ClientEvent::Ping,
            other => return Err(format!("unknown message type `{other}`")),
        })
    }
}

/// A server message before the connection stamps its `seq`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub kind: &'static str,
    pub round: u32,
    pub payload: Value,
}

impl Outbound {
    pub fn new(kind: &'static str, round: u32, payload: Value) -> Outbound {
        Outbound { kind, round, payload }
    }

    pub fn error(round: u32, code: &str, message: impl Into<String>) -> Outbound {
        Outbound::new("error", round, json!({"code": code, "message": message.into()}))
    }

    pub fn engine_error(round: u32, e: &EngineError) -> Outbound {
        let code = match e {
            EngineError::Mismatch(_) => "mismatch",
            EngineError::Finished => "finished",
            EngineError::Abandoned => "abandoned",
            EngineError::WrongPlayer { .. } => "wrong_player",
            EngineError::WrongPhase { .. } => "wrong_phase",
            EngineError::UnknownSignal(_) => "unknown_signal",
            EngineError::MeaningNotDisplayed(_) => "meaning_not_displayed",
        };
        Outbound::error(round, code, e.to_string())
    }

    pub fn stamp(self, seq: u64) -> Envelope {
        Envelope {
            kind: self.kind.to_string(),
            round: self.round,
            payload: self.payload,
            seq,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_client_messages() {
        assert_eq!(
            ClientEvent::parse(r#"{"type":"send","round":3,"payload":{"signal":"fuwo"},"seq":1}"#).unwrap(),
            ClientEvent::Send {
                round: 3,
                signal: "fuwo".into()
            }
        );
        assert_eq!(
            ClientEvent::parse(r#"{"type":"advance","round":9}"#).unwrap(),
            ClientEvent::Advance { round: 9 }
        );
        assert!(ClientEvent::parse(r#"{"type":"guess","round":1,"payload":{}}"#).is_err());
        assert!(ClientEvent::parse(r#"{"type":"dance"}"#).is_err());
        assert!(ClientEvent::parse("nope").is_err());
    }

    #[test]
    fn stamped_envelope_shape() {
        let v = serde_json::to_value(Outbound::error(4, "wrong_player", "no").stamp(7)).unwrap();
        assert_eq!(v, json!({"type":"error","round":4,"payload":{"code":"wrong_player","message":"no"},"seq":7}));
    }
}
