//! Lobby pairing and per-dyad event handling, independent of the transport.
//!
//! Each dyad sits behind its own async mutex, so its events are handled one
//! at a time in arrival order while distinct dyads run in parallel. Every
//! accepted event reaches the dyad's log file before anything is pushed to
//! the players.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use colex_core::engine::{Game, GameMeta, RoundPhase};
use colex_core::lexicon::{generate_stimulus, Lexicon, WordList};
use colex_core::schedule::{build_schedule, pair_frequency_table};
use colex_core::{Meaning, Player, Signal};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use tokio::sync::mpsc;

use crate::config::ExperimentConfig;
use crate::protocol::{ClientEvent, Outbound};
use crate::store::{self, FeedbackRecord, LogWriter, Recovery};
use crate::{HubError, ServerError};

pub type Token = String;
pub type Tx = mpsc::UnboundedSender<Outbound>;

#[derive(Debug, Default)]
struct Session {
    dyad: Option<String>,
    role: Option<Player>,
    /// Connection held while waiting for a partner.
    tx: Option<Tx>,
}

#[derive(Debug, Default)]
struct Lobby {
    sessions: HashMap<Token, Session>,
    waiting: Option<Token>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JoinOutcome {
    pub token: Token,
    /// Set once the token has a partner.
    pub dyad: Option<String>,
    pub role: Option<Player>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub waiting: usize,
    pub dyads_active: usize,
    pub dyads_total: usize,
}

#[derive(Debug)]
pub struct DyadRuntime {
    pub id: String,
    pub game: Game,
    writer: Option<LogWriter>,
    txs: [Option<Tx>; 2],
    started: Instant,
    last_activity: Instant,
    acks: [bool; 2],
    nudged: Option<(u32, RoundPhase)>,
    dir: PathBuf,
}

fn idx(p: Player) -> usize {
    match p {
        Player::A => 0,
        Player::B => 1,
    }
}

impl DyadRuntime {
    fn t_ms(&self, now: Instant) -> u64 {
        now.saturating_duration_since(self.started).as_millis() as u64
    }

    pub fn is_closed(&self) -> bool {
        self.game.state.is_finished() || self.game.state.is_abandoned() || self.writer.is_none()
    }

    fn push(&self, p: Player, msg: Outbound) {
        if let Some(tx) = &self.txs[idx(p)] {
            let _ = tx.send(msg);
        }
    }

    fn push_both(&self, msg: Outbound) {
        self.push(Player::A, msg.clone());
        self.push(Player::B, msg);
    }

    /// What a player sees right now.
    fn status_for(&self, p: Player) -> Outbound {
        let st = &self.game.state;
        let round = st.round.min(st.rounds_total());
        if let Some(reason) = self.dropout_reason() {
            return Outbound::new("abandoned", round, reason);
        }
        if st.is_finished() {
            let s = st.summary();
            return Outbound::new("game_over", round, json!({"player": p, "summary": s, "score": s.total_correct}));
        }
        match st.view_for(p) {
            Ok(v) => Outbound::new("view", v.round, serde_json::to_value(v).expect("view serializes")),
            Err(e) => Outbound::engine_error(round, &e),
        }
    }

    fn dropout_reason(&self) -> Option<serde_json::Value> {
        if !self.game.state.is_abandoned() {
            return None;
        }
        let e = self.game.log.events.last()?;
        Some(json!({"player": e.player, "reason": e.payload.get("reason")}))
    }

    fn push_status(&self) {
        self.push(Player::A, self.status_for(Player::A));
        self.push(Player::B, self.status_for(Player::B));
    }

    /// Writes new log events. On failure the dyad stops accepting events.
    fn persist(&mut self) -> bool {
        let Some(w) = self.writer.as_mut() else {
            return false;
        };
        match w.append_new(&self.game.log.events) {
            Ok(()) => true,
            Err(e) => {
                tracing::error!(dyad = %self.id, "log append failed: {e}");
                self.writer = None;
                self.push_both(Outbound::error(self.game.state.round, "storage", "log write failed; game closed"));
                false
            }
        }
    }

    /// Players whose move the game is waiting for.
    fn awaited(&self) -> Vec<Player> {
        let st = &self.game.state;
        let sender = st.current_sender();
        match st.phase {
            RoundPhase::AwaitingSignal => vec![sender],
            RoundPhase::AwaitingGuess => vec![sender.other()],
            RoundPhase::FeedbackShown => [Player::A, Player::B]
                .into_iter()
                .filter(|p| !self.acks[idx(*p)])
                .collect(),
        }
    }

    fn advance(&mut self, now: Instant) {
        let t = self.t_ms(now);
        match self.game.advance(t) {
            Ok(_) => {
                self.acks = [false; 2];
                if self.persist() {
                    self.push_status();
                }
            }
            Err(e) => tracing::warn!(dyad = %self.id, "advance rejected: {e}"),
        }
    }

    /// Returns true when the feedback screen has just opened.
    fn handle(&mut self, player: Player, ev: ClientEvent, now: Instant) -> bool {
        let st = &self.game.state;
        let (round, phase, sender) = (st.round, st.phase, st.current_sender());
        if self.is_closed() {
            let code = if st.is_finished() { "finished" } else { "abandoned" };
            self.push(player, Outbound::error(round, code, "the game is over"));
            return false;
        }
        let t = self.t_ms(now);
        match ev {
            ClientEvent::Ping => self.push(player, Outbound::new("pong", round, json!({}))),
            ClientEvent::FeedbackForm { .. } => {}
            ClientEvent::Send { round: r, signal } => {
                if r != round || (player == sender && phase != RoundPhase::AwaitingSignal) {
                    return false;
                }
                match self.game.send(player, Signal::new(signal), t) {
                    Ok(()) => {
                        self.last_activity = now;
                        if self.persist() {
                            self.push_status();
                        }
                    }
                    Err(e) => self.push(player, Outbound::engine_error(round, &e)),
                }
            }
            ClientEvent::Guess { round: r, meaning } => {
                if r != round || (player != sender && phase == RoundPhase::FeedbackShown) {
                    return false;
                }
                match self.game.guess(player, Meaning::new(meaning), t) {
                    Ok(_) => {
                        self.last_activity = now;
                        self.acks = [false; 2];
                        if self.persist() {
                            self.push_status();
                            return true;
                        }
                    }
                    Err(e) => self.push(player, Outbound::engine_error(round, &e)),
                }
            }
            ClientEvent::Advance { round: r } => {
                if r != round || phase != RoundPhase::FeedbackShown {
                    return false;
                }
                self.acks[idx(player)] = true;
                self.last_activity = now;
                if self.acks == [true; 2] {
                    self.advance(now);
                }
            }
        }
        false
    }
}

pub struct Hub {
    config: ExperimentConfig,
    lexicon: Lexicon,
    wordlist: WordList,
    lobby: Mutex<Lobby>,
    dyads: Mutex<BTreeMap<String, Arc<tokio::sync::Mutex<DyadRuntime>>>>,
    seeds: Mutex<ChaCha8Rng>,
    next_dyad: AtomicU64,
    feedback_lock: Mutex<()>,
    recovered: Vec<(String, Recovery)>,
}

impl Hub {
    /// Prepares the data directory and closes games left running by a
    /// previous process.
    pub fn open(config: ExperimentConfig) -> Result<Arc<Hub>, ServerError> {
        let (lexicon, wordlist) = config.load_lexicon()?;
        config.validate(&lexicon, &wordlist)?;
        std::fs::create_dir_all(&config.data_dir)?;
        let mut recovered = Vec::new();
        let mut max_id = 0;
        for dir in store::dyad_dirs(&config.data_dir)? {
            let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            if let Some(n) = name.strip_prefix("dyad-").and_then(|n| n.parse::<u64>().ok()) {
                max_id = max_id.max(n);
            }
            let r = store::recover_dyad(&dir, config.fsync);
            if let Recovery::Unreadable(msg) = &r {
                tracing::warn!(dyad = %name, "cannot recover: {msg}");
            }
            recovered.push((name, r));
        }
        let seed = config.seed.unwrap_or_else(rand::random);
        Ok(Arc::new(Hub {
            lexicon,
            wordlist,
            lobby: Mutex::default(),
            dyads: Mutex::default(),
            seeds: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            next_dyad: AtomicU64::new(max_id + 1),
            feedback_lock: Mutex::new(()),
            recovered,
            config,
        }))
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// What startup found in the data directory.
    pub fn recovered(&self) -> &[(String, Recovery)] {
        &self.recovered
    }

    pub fn dyad(&self, id: &str) -> Option<Arc<tokio::sync::Mutex<DyadRuntime>>> {
        self.dyads.lock().unwrap().get(id).cloned()
    }

    fn all_dyads(&self) -> Vec<Arc<tokio::sync::Mutex<DyadRuntime>>> {
        self.dyads.lock().unwrap().values().cloned().collect()
    }

    pub fn knows(&self, token: &str) -> bool {
        self.lobby.lock().unwrap().sessions.contains_key(token)
    }

    pub fn session(&self, token: &str) -> Option<(Option<String>, Option<Player>)> {
        let lobby = self.lobby.lock().unwrap();
        lobby.sessions.get(token).map(|s| (s.dyad.clone(), s.role))
    }

    /// Issues a token. The second waiting participant completes a dyad.
    pub fn join(&self, consent: bool) -> Result<JoinOutcome, HubError> {
        if !consent {
            return Err(HubError::ConsentRequired);
        }
        let token = format!("{:032x}", rand::random::<u128>());
        let mut lobby = self.lobby.lock().unwrap();
        let Some(partner) = lobby.waiting.take() else {
            lobby.sessions.insert(token.clone(), Session::default());
            lobby.waiting = Some(token.clone());
            return Ok(JoinOutcome {
                token,
                dyad: None,
                role: None,
            });
        };
        let partner_tx = lobby.sessions.get_mut(&partner).and_then(|s| s.tx.take());
        let runtime = match self.create_dyad(partner_tx) {
            Ok(r) => r,
            Err(e) => {
                lobby.waiting = Some(partner);
                return Err(e);
            }
        };
        let id = runtime.id.clone();
        for (t, role) in [(&partner, Player::A), (&token, Player::B)] {
            lobby.sessions.insert(
                t.clone(),
                Session {
                    dyad: Some(id.clone()),
                    role: Some(role),
                    tx: None,
                },
            );
        }
        runtime.push(Player::A, runtime.status_for(Player::A));
        self.dyads
            .lock()
            .unwrap()
            .insert(id.clone(), Arc::new(tokio::sync::Mutex::new(runtime)));
        tracing::info!(dyad = %id, "paired");
        Ok(JoinOutcome {
            token,
            dyad: Some(id),
            role: Some(Player::B),
        })
    }

    fn create_dyad(&self, a_tx: Option<Tx>) -> Result<DyadRuntime, HubError> {
        let seed = self.seeds.lock().unwrap().next_u64();
        let mut sub = ChaCha8Rng::seed_from_u64(seed);
        let (stim_seed, sched_seed, game_seed) = (sub.next_u64(), sub.next_u64(), sub.next_u64());
        let c = self.config.condition;
        let gen = |e: String| HubError::Generation(e);
        let stimulus = generate_stimulus(
            &self.lexicon,
            &self.wordlist,
            c.required_variant(),
            self.config.n_signals(),
            stim_seed,
        )
        .map_err(|e| gen(e.to_string()))?;
        let table = pair_frequency_table(&stimulus.meaning_space, c).map_err(|e| gen(e.to_string()))?;
        let schedule = build_schedule(&table, sched_seed);
        let id = format!("dyad-{:04}", self.next_dyad.fetch_add(1, Ordering::SeqCst));
        let meta = GameMeta {
            dyad: id.clone(),
            condition: c,
        };
        let game = Game::start(meta, stimulus, schedule, game_seed, 0).map_err(|e| gen(e.to_string()))?;
        let dir = self.config.data_dir.join(&id);
        let writer = LogWriter::create(&dir, &game, self.config.fsync)?;
        let now = Instant::now();
        Ok(DyadRuntime {
            id,
            game,
            writer: Some(writer),
            txs: [a_tx, None],
            started: now,
            last_activity: now,
            acks: [false; 2],
            nudged: None,
            dir,
        })
    }

    /// Attaches a connection to a token, replacing any earlier one, and sends
    /// the current screen.
    pub async fn connect(&self, token: &str, tx: Tx) -> Result<(), HubError> {
        let (dyad, role) = {
            let mut lobby = self.lobby.lock().unwrap();
            let s = lobby.sessions.get_mut(token).ok_or(HubError::UnknownToken)?;
            match (&s.dyad, s.role) {
                (Some(d), Some(r)) => (d.clone(), r),
                _ => {
                    let _ = tx.send(Outbound::new("waiting", 0, json!({})));
                    s.tx = Some(tx);
                    return Ok(());
                }
            }
        };
        let rt = self.dyad(&dyad).ok_or(HubError::UnknownToken)?;
        let mut rt = rt.lock().await;
        let _ = tx.send(rt.status_for(role));
        rt.txs[idx(role)] = Some(tx);
        Ok(())
    }

    /// Detaches `tx` if it is still the token's current connection.
    pub async fn disconnect(&self, token: &str, tx: &Tx) {
        let Some((dyad, role)) = self.session(token) else {
            return;
        };
        match (dyad, role) {
            (Some(d), Some(r)) => {
                if let Some(rt) = self.dyad(&d) {
                    let mut rt = rt.lock().await;
                    if rt.txs[idx(r)].as_ref().is_some_and(|t| t.same_channel(tx)) {
                        rt.txs[idx(r)] = None;
                    }
                }
            }
            _ => {
                let mut lobby = self.lobby.lock().unwrap();
                if let Some(s) = lobby.sessions.get_mut(token) {
                    if s.tx.as_ref().is_some_and(|t| t.same_channel(tx)) {
                        s.tx = None;
                    }
                }
            }
        }
    }

    /// Routes one client event. Replies travel over the connections.
    pub async fn handle(self: &Arc<Self>, token: &str, ev: ClientEvent) -> Result<(), HubError> {
        let (dyad, role) = self.session(token).ok_or(HubError::UnknownToken)?;
        if let ClientEvent::FeedbackForm { text, took_notes } = &ev {
            return self.submit_feedback(token, text, *took_notes);
        }
        let (Some(dyad), Some(role)) = (dyad, role) else {
            let tx = self.lobby.lock().unwrap().sessions.get(token).and_then(|s| s.tx.clone());
            if let Some(tx) = tx {
                let _ = tx.send(Outbound::error(0, "not_paired", "waiting for a partner"));
            }
            return Ok(());
        };
        let rt = self.dyad(&dyad).ok_or(HubError::UnknownToken)?;
        let mut guard = rt.lock().await;
        if guard.handle(role, ev, Instant::now()) {
            let round = guard.game.state.round;
            let hub = Arc::clone(self);
            let wait = Duration::from_secs(self.config.feedback_secs);
            tokio::spawn(async move {
                tokio::time::sleep(wait).await;
                hub.feedback_timeout(&dyad, round).await;
            });
        }
        Ok(())
    }

    /// Leaves the feedback screen of `round` if the players have not already.
    pub async fn feedback_timeout(&self, dyad: &str, round: u32) {
        let Some(rt) = self.dyad(dyad) else { return };
        let mut rt = rt.lock().await;
        let st = &rt.game.state;
        if !rt.is_closed() && st.round == round && st.phase == RoundPhase::FeedbackShown {
            rt.advance(Instant::now());
        }
    }

    pub fn submit_feedback(&self, token: &str, text: &str, took_notes: bool) -> Result<(), HubError> {
        let (dyad, role) = self.session(token).ok_or(HubError::UnknownToken)?;
        let rec = FeedbackRecord {
            dyad,
            role: role.map(|r| r.to_string()),
            text: text.to_string(),
            took_notes,
        };
        let _g = self.feedback_lock.lock().unwrap();
        store::append_feedback(&self.config.data_dir, &rec, self.config.fsync)?;
        Ok(())
    }

    /// Closes dyads idle for at least the dropout timeout as of `now`, and
    /// nudges players who have sat on a move past the round timeout.
    pub async fn dropout_sweep(&self, now: Instant) -> Vec<String> {
        let drop_after = Duration::from_secs(self.config.dropout_timeout_secs);
        let nudge_after = Duration::from_secs(self.config.round_timeout_secs);
        let mut closed = Vec::new();
        for rt in self.all_dyads() {
            let mut rt = rt.lock().await;
            if rt.is_closed() {
                continue;
            }
            let idle = now.saturating_duration_since(rt.last_activity);
            let awaited = rt.awaited();
            let round = rt.game.state.round;
            if idle >= drop_after {
                let who = match awaited.as_slice() {
                    [p] => Some(*p),
                    _ => None,
                };
                let t = rt.t_ms(now);
                if rt.game.dropout(who, "timeout", t).is_ok() && rt.persist() {
                    rt.push_status();
                    closed.push(rt.id.clone());
                    tracing::info!(dyad = %rt.id, "closed after {}s idle", idle.as_secs());
                }
            } else if idle >= nudge_after && rt.nudged != Some((round, rt.game.state.phase)) {
                rt.nudged = Some((round, rt.game.state.phase));
                for p in awaited {
                    rt.push(p, Outbound::new("timeout", round, json!({"idle_secs": idle.as_secs()})));
                }
            }
        }
        closed
    }

    /// The export archive, if `bearer` matches the admin token.
    pub async fn export(&self, bearer: Option<&str>) -> Result<Vec<u8>, HubError> {
        let admin = &self.config.admin_token;
        if admin.is_empty() || bearer != Some(admin.as_str()) {
            return Err(HubError::Forbidden);
        }
        let mut dyads = Vec::new();
        for dir in store::dyad_dirs(&self.config.data_dir)? {
            let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let files = match self.dyad(&name) {
                Some(rt) => {
                    let rt = rt.lock().await;
                    store::read_dyad_files(&rt.dir)?
                }
                None => store::read_dyad_files(&dir)?,
            };
            dyads.push((name, files));
        }
        let feedback = {
            let _g = self.feedback_lock.lock().unwrap();
            let p = self.config.data_dir.join(store::FEEDBACK_FILE);
            if p.is_file() {
                Some(std::fs::read(p)?)
            } else {
                None
            }
        };
        Ok(store::build_archive(&self.config.snapshot(), feedback.as_deref(), dyads)?)
    }

    pub async fn health(&self) -> Health {
        let waiting = usize::from(self.lobby.lock().unwrap().waiting.is_some());
        let all = self.all_dyads();
        let mut active = 0;
        for rt in &all {
            if !rt.lock().await.is_closed() {
                active += 1;
            }
        }
        Health {
            status: "ok",
            waiting,
            dyads_active: active,
            dyads_total: all.len(),
        }
    }
}
