//! Scripted WebSocket players and an archive checker, shared with the
//! acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;

use colex_core::engine::{DyadLog, EventKind, Game, PlayerView, RoundPhase};
use colex_core::lexicon::StimulusBundle;
use colex_core::schedule::TrialSchedule;
use futures_util::{SinkExt, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

#[derive(Debug, Clone, Default)]
pub struct ClientOutcome {
    pub views: usize,
    pub errors: Vec<String>,
    pub duplicates_sent: usize,
    pub score: Option<u64>,
}

/// One participant: joins, then plays every screen until the game ends.
/// With probability `dup` each move is sent twice.
pub async fn run_client(addr: SocketAddr, seed: u64, dup: f64) -> ClientOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let http = reqwest::Client::new();
    let joined: Value = http
        .post(format!("http://{addr}/api/join"))
        .json(&json!({"consent": true}))
        .send()
        .await
        .expect("join request")
        .json()
        .await
        .expect("join body");
    let token = joined["token"].as_str().expect("token").to_string();
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/api/ws?token={token}"))
        .await
        .expect("ws connect");
    let mut out = ClientOutcome::default();
    let mut seq = 0u64;
    while let Some(msg) = ws.next().await {
        let Ok(Message::Text(text)) = msg else { continue };
        let env: Value = serde_json::from_str(&text).expect("server envelope");
        match env["type"].as_str().unwrap_or_default() {
            "view" => {
                out.views += 1;
                let v: PlayerView = serde_json::from_value(env["payload"].clone()).expect("view payload");
                let reply = match (v.phase, v.prompt.as_ref()) {
                    (RoundPhase::AwaitingSignal, Some(prompt)) => {
                        let n = v.signal_choices.len();
                        let k = prompt.as_str().bytes().map(usize::from).sum::<usize>() % n;
                        Some(json!({"type":"send","round":v.round,"payload":{"signal":v.signal_choices[k]}}))
                    }
                    (RoundPhase::AwaitingGuess, None) if v.signal.is_some() => {
                        let m = &v.meaning_choices[rng.random_range(0..v.meaning_choices.len())];
                        Some(json!({"type":"guess","round":v.round,"payload":{"meaning":m}}))
                    }
                    (RoundPhase::FeedbackShown, _) => Some(json!({"type":"advance","round":v.round})),
                    _ => None,
                };
                if let Some(mut reply) = reply {
                    let copies = if rng.random_bool(dup) { 2 } else { 1 };
                    out.duplicates_sent += copies - 1;
                    for _ in 0..copies {
                        seq += 1;
                        reply["seq"] = json!(seq);
                        ws.send(Message::Text(reply.to_string().into())).await.expect("ws send");
                    }
                }
            }
            "game_over" => {
                out.score = env["payload"]["score"].as_u64();
                break;
            }
            "abandoned" => break,
            "error" => out.errors.push(env["payload"]["code"].as_str().unwrap_or_default().to_string()),
            _ => {}
        }
    }
    let _ = ws.close(None).await;
    out
}

/// Runs `2 * n` clients at once.
pub async fn drive_dyads(addr: SocketAddr, n: usize, seed: u64, dup: f64) -> Vec<ClientOutcome> {
    let tasks: Vec<_> = (0..2 * n as u64)
        .map(|i| tokio::spawn(run_client(addr, seed.wrapping_mul(1000).wrapping_add(i), dup)))
        .collect();
    let mut out = Vec::new();
    for t in tasks {
        out.push(t.await.expect("client task"));
    }
    out
}

#[derive(Debug, Default)]
pub struct ArchiveCheck {
    pub dyads: usize,
    pub complete: usize,
    pub has_config: bool,
    /// Dyads whose log failed to replay, with the reason.
    pub violations: Vec<String>,
    /// Rounds and send events per dyad.
    pub rounds: BTreeMap<String, (usize, usize)>,
}

/// Unpacks an export and replays every dyad's log through the engine.
pub fn check_archive(bytes: &[u8]) -> ArchiveCheck {
    let dir = tempfile::tempdir().expect("tempdir");
    tar::Archive::new(bytes).unpack(dir.path()).expect("unpack");
    let mut check = ArchiveCheck {
        has_config: dir.path().join("config.toml").is_file(),
        ..Default::default()
    };
    let mut dirs: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for d in dirs {
        let name = d.file_name().unwrap().to_string_lossy().to_string();
        check.dyads += 1;
        match replay_dir(&d) {
            Ok((log, game)) => {
                if log.is_complete() {
                    check.complete += 1;
                }
                let sends = log.events.iter().filter(|e| e.event == EventKind::Send).count();
                check.rounds.insert(name, (game.state.history.len(), sends));
            }
            Err(e) => check.violations.push(format!("{name}: {e}")),
        }
    }
    check
}

fn replay_dir(d: &Path) -> Result<(DyadLog, Game), String> {
    let stim = StimulusBundle::load(d.join("stimulus.json")).map_err(|e| e.to_string())?;
    let sched = TrialSchedule::load(d.join("schedule.json")).map_err(|e| e.to_string())?;
    let log = DyadLog::load(d.join("log.jsonl"))
        .map_err(|e| e.to_string())?
        .map_err(|e| e.to_string())?;
    let game = Game::replay(stim, sched, &log).map_err(|e| e.to_string())?;
    Ok((log, game))
}
