//! The append-only per-dyad event log (one JSON object per line).

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::types::{Condition, Meaning, MeaningPair, Player, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    GameStart,
    Send,
    Guess,
    Feedback,
    Advance,
    GameEnd,
    Dropout,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("serializable");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// One line of a dyad log: `{event, round, player, payload, t_ms}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub event: EventKind,
    pub round: u32,
    pub player: Option<Player>,
    pub payload: Value,
    pub t_ms: u64,
}

/// Identifying metadata written into the `game_start` event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameMeta {
    pub dyad: String,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameStartPayload {
    pub condition: Condition,
    pub dyad: String,
    pub first_sender: Player,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackPayload {
    pub correct: bool,
    pub guess: Meaning,
    pub pair: MeaningPair,
    pub prompt: Meaning,
    pub signal: Signal,
}

/// A completed round as reconstructed from `send` and `feedback` events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedRound {
    pub round: u32,
    pub sender: Player,
    pub pair: MeaningPair,
    pub prompt: Meaning,
    pub signal: Signal,
    pub guess: Meaning,
    pub correct: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct LogParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DyadLog {
    pub events: Vec<LogEvent>,
}

impl LogEvent {
    pub fn game_start(meta: &GameMeta, first_sender: Player, seed: u64, t_ms: u64) -> LogEvent {
        let payload = GameStartPayload {
            condition: meta.condition,
            dyad: meta.dyad.clone(),
            first_sender,
            seed,
        };
        LogEvent {
            event: EventKind::GameStart,
            round: 1,
            player: None,
            payload: serde_json::to_value(payload).expect("serializable"),
            t_ms,
        }
    }

    pub fn send(round: u32, player: Player, signal: &Signal, t_ms: u64) -> LogEvent {
        LogEvent {
            event: EventKind::Send,
            round,
            player: Some(player),
            payload: json!({ "signal": signal }),
            t_ms,
        }
    }

    pub fn guess(round: u32, player: Player, meaning: &Meaning, t_ms: u64) -> LogEvent {
        LogEvent {
            event: EventKind::Guess,
            round,
            player: Some(player),
            payload: json!({ "meaning": meaning }),
            t_ms,
        }
    }

    pub fn feedback(round: u32, payload: &FeedbackPayload, t_ms: u64) -> LogEvent {
        LogEvent {
            event: EventKind::Feedback,
            round,
            player: None,
            payload: serde_json::to_value(payload).expect("serializable"),
            t_ms,
        }
    }

    pub fn advance(round: u32, t_ms: u64) -> LogEvent {
        LogEvent {
            event: EventKind::Advance,
            round,
            player: None,
            payload: json!({}),
            t_ms,
        }
    }

    pub fn game_end(round: u32, total_correct: u32, post_burn_in_correct: u32, t_ms: u64) -> LogEvent {
        LogEvent {
            event: EventKind::GameEnd,
            round,
            player: None,
            payload: json!({
                "post_burn_in_correct": post_burn_in_correct,
                "total_correct": total_correct,
            }),
            t_ms,
        }
    }

    pub fn dropout(round: u32, player: Option<Player>, reason: &str, t_ms: u64) -> LogEvent {
        LogEvent {
            event: EventKind::Dropout,
            round,
            player,
            payload: json!({ "reason": reason }),
            t_ms,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log events serialize")
    }

    fn payload_str(&self, key: &str) -> Option<&str> {
        self.payload.get(key).and_then(Value::as_str)
    }

    pub fn signal(&self) -> Option<Signal> {
        self.payload_str("signal").map(Signal::from)
    }

    pub fn meaning(&self) -> Option<Meaning> {
        self.payload_str("meaning").map(Meaning::from)
    }
}

impl DyadLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<DyadLog, LogParseError> {
        let events = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| LogParseError {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(DyadLog { events })
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Result<DyadLog, LogParseError>> {
        Ok(DyadLog::from_jsonl(&fs::read_to_string(path)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        f.flush()
    }

    pub fn start(&self) -> Option<GameStartPayload> {
        self.events
            .iter()
            .find(|e| e.event == EventKind::GameStart)
            .and_then(|e| serde_json::from_value(e.payload.clone()).ok())
    }

    pub fn is_complete(&self) -> bool {
        self.events.iter().any(|e| e.event == EventKind::GameEnd)
    }

    pub fn is_withdrawn(&self) -> bool {
        self.events.iter().any(|e| e.event == EventKind::Dropout)
    }

    /// Completed rounds in order. A round counts once its feedback is logged.
    pub fn rounds(&self) -> Vec<LoggedRound> {
        let mut out = Vec::new();
        let mut sender: Option<(u32, Player)> = None;
        for e in &self.events {
            match e.event {
                EventKind::Send => {
                    if let Some(p) = e.player {
                        sender = Some((e.round, p));
                    }
                }
                EventKind::Feedback => {
                    let Ok(fb) = serde_json::from_value::<FeedbackPayload>(e.payload.clone()) else {
                        continue;
                    };
                    let Some((r, s)) = sender.take().filter(|(r, _)| *r == e.round) else {
                        continue;
                    };
                    out.push(LoggedRound {
                        round: r,
                        sender: s,
                        pair: fb.pair,
                        prompt: fb.prompt,
                        signal: fb.signal,
                        guess: fb.guess,
                        correct: fb.correct,
                    });
                }
                _ => {}
            }
        }
        out
    }
}
