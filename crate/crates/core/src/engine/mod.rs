//! The per-dyad game state machine.
//!
//! Each round runs `awaiting_signal -> awaiting_guess -> feedback_shown`, and
//! an explicit [`GameState::advance`] moves to the next round with the roles
//! swapped. [`Game`] wraps the state with its event log; [`Game::replay`]
//! re-executes a log and checks that it reproduces itself exactly.

mod log;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::StimulusBundle;
use crate::schedule::{Phase, Trial, TrialSchedule};
use crate::types::{Meaning, MeaningPair, Player, Signal};

pub use log::{
    DyadLog, EventKind, FeedbackPayload, GameMeta, GameStartPayload, LogEvent, LogParseError,
    LoggedRound,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("schedule does not match stimulus: {0}")]
    Mismatch(String),
    #[error("game is finished")]
    Finished,
    #[error("game was abandoned")]
    Abandoned,
    #[error("player {got} cannot act now, waiting for {expected}")]
    WrongPlayer { expected: Player, got: Player },
    #[error("action not allowed in phase {actual:?}")]
    WrongPhase { actual: RoundPhase },
    #[error("unknown signal `{0}`")]
    UnknownSignal(Signal),
    #[error("meaning `{0}` is not displayed this round")]
    MeaningNotDisplayed(Meaning),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundPhase {
    AwaitingSignal,
    AwaitingGuess,
    FeedbackShown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Sender,
    Receiver,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub sender: Player,
    pub pair: MeaningPair,
    pub prompt: Meaning,
    pub signal: Signal,
    pub guess: Meaning,
    pub correct: bool,
    pub signal_t_ms: u64,
    pub guess_t_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub signal: Signal,
    pub prompt: Meaning,
    pub guess: Meaning,
    pub correct: bool,
}

/// What one player's screen shows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerView {
    pub round: u32,
    pub rounds_total: u32,
    pub player: Player,
    pub role: Role,
    pub phase: RoundPhase,
    /// Both meanings in this player's display order.
    pub meanings: [Meaning; 2],
    /// The meaning to communicate; only ever set for the sender.
    pub prompt: Option<Meaning>,
    /// The signal sent this round, once it exists.
    pub signal: Option<Signal>,
    pub signal_choices: Vec<Signal>,
    pub meaning_choices: Vec<Meaning>,
    pub feedback: Option<Feedback>,
    pub score: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GameSummary {
    pub rounds_played: u32,
    pub total_correct: u32,
    pub post_burn_in_correct: u32,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameState {
    pub stimulus: StimulusBundle,
    pub schedule: TrialSchedule,
    pub seed: u64,
    pub first_sender: Player,
    /// 1-based; `schedule.len() + 1` once finished.
    pub round: u32,
    pub phase: RoundPhase,
    pub history: Vec<RoundRecord>,
    /// Per round, whether player A / player B see the pair reversed.
    pub display_swapped: Vec<[bool; 2]>,
    pending_signal: Option<(Signal, u64)>,
    abandoned: bool,
}

/// Creates a fresh game. The first sender and every per-player display order
/// are drawn from `seed` up front so that a replay reproduces them.
pub fn new_game(
    stimulus: StimulusBundle,
    schedule: TrialSchedule,
    seed: u64,
) -> Result<GameState, EngineError> {
    if schedule.is_empty() {
        return Err(EngineError::Mismatch("empty schedule".into()));
    }
    for t in &schedule.trials {
        for m in t.pair.members() {
            if !stimulus.meaning_space.contains(m) {
                return Err(EngineError::Mismatch(format!(
                    "round {} shows `{m}`, which is not in the meaning space",
                    t.round
                )));
            }
        }
        if !t.pair.contains(&t.prompt) {
            return Err(EngineError::Mismatch(format!(
                "round {} prompts a meaning outside its pair",
                t.round
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first_sender = if rng.random_bool(0.5) { Player::A } else { Player::B };
    let display_swapped = (0..schedule.len())
        .map(|_| [rng.random_bool(0.5), rng.random_bool(0.5)])
        .collect();
    Ok(GameState {
        stimulus,
        schedule,
        seed,
        first_sender,
        round: 1,
        phase: RoundPhase::AwaitingSignal,
        history: Vec::new(),
        display_swapped,
        pending_signal: None,
        abandoned: false,
    })
}

fn player_index(p: Player) -> usize {
    match p {
        Player::A => 0,
        Player::B => 1,
    }
}

impl GameState {
    pub fn rounds_total(&self) -> u32 {
        self.schedule.len() as u32
    }

    pub fn is_finished(&self) -> bool {
        self.round > self.rounds_total()
    }

    pub fn is_abandoned(&self) -> bool {
        self.abandoned
    }

    pub fn sender_for(&self, round: u32) -> Player {
        if round % 2 == 1 {
            self.first_sender
        } else {
            self.first_sender.other()
        }
    }

    pub fn current_sender(&self) -> Player {
        self.sender_for(self.round)
    }

    pub fn current_trial(&self) -> Option<&Trial> {
        self.schedule.trial(self.round)
    }

    pub fn pending_signal(&self) -> Option<&Signal> {
        self.pending_signal.as_ref().map(|(s, _)| s)
    }

    /// The pair as `player` sees it in `round`.
    pub fn display_order(&self, round: u32, player: Player) -> Option<[Meaning; 2]> {
        let trial = self.schedule.trial(round)?;
        let swapped = self.display_swapped[(round - 1) as usize][player_index(player)];
        let [a, b] = trial.pair.members();
        Some(if swapped {
            [b.clone(), a.clone()]
        } else {
            [a.clone(), b.clone()]
        })
    }

    fn ensure_active(&self) -> Result<&Trial, EngineError> {
        if self.abandoned {
            return Err(EngineError::Abandoned);
        }
        self.current_trial().ok_or(EngineError::Finished)
    }

    pub fn view_for(&self, player: Player) -> Result<PlayerView, EngineError> {
        let trial = self.ensure_active()?;
        let sender = self.current_sender();
        let role = if player == sender { Role::Sender } else { Role::Receiver };
        let meanings = self
            .display_order(self.round, player)
            .expect("active round has a trial");
        let feedback = match self.phase {
            RoundPhase::FeedbackShown => self.history.last().map(|r| Feedback {
                signal: r.signal.clone(),
                prompt: r.prompt.clone(),
                guess: r.guess.clone(),
                correct: r.correct,
            }),
            _ => None,
        };
        let prompt = match role {
            Role::Sender => Some(trial.prompt.clone()),
            Role::Receiver => None,
        };
        let signal = match self.phase {
            RoundPhase::AwaitingSignal => None,
            RoundPhase::AwaitingGuess => self.pending_signal().cloned(),
            RoundPhase::FeedbackShown => self.history.last().map(|r| r.signal.clone()),
        };
        let signal_choices = match (role, self.phase) {
            (Role::Sender, RoundPhase::AwaitingSignal) => self.stimulus.signal_set.signals.clone(),
            _ => Vec::new(),
        };
        let meaning_choices = match (role, self.phase) {
            (Role::Receiver, RoundPhase::AwaitingGuess) => meanings.to_vec(),
            _ => Vec::new(),
        };
        Ok(PlayerView {
            round: self.round,
            rounds_total: self.rounds_total(),
            player,
            role,
            phase: self.phase,
            meanings,
            prompt,
            signal,
            signal_choices,
            meaning_choices,
            feedback,
            score: self.history.iter().filter(|r| r.correct).count() as u32,
        })
    }

    pub fn apply_send(&mut self, player: Player, signal: Signal, t_ms: u64) -> Result<(), EngineError> {
        self.ensure_active()?;
        if self.phase != RoundPhase::AwaitingSignal {
            return Err(EngineError::WrongPhase { actual: self.phase });
        }
        let sender = self.current_sender();
        if player != sender {
            return Err(EngineError::WrongPlayer {
                expected: sender,
                got: player,
            });
        }
        if !self.stimulus.signal_set.contains(&signal) {
            return Err(EngineError::UnknownSignal(signal));
        }
        self.pending_signal = Some((signal, t_ms));
        self.phase = RoundPhase::AwaitingGuess;
        Ok(())
    }

    pub fn apply_guess(
        &mut self,
        player: Player,
        meaning: Meaning,
        t_ms: u64,
    ) -> Result<&RoundRecord, EngineError> {
        let trial = self.ensure_active()?.clone();
        if self.phase != RoundPhase::AwaitingGuess {
            return Err(EngineError::WrongPhase { actual: self.phase });
        }
        let receiver = self.current_sender().other();
        if player != receiver {
            return Err(EngineError::WrongPlayer {
                expected: receiver,
                got: player,
            });
        }
        if !trial.pair.contains(&meaning) {
            return Err(EngineError::MeaningNotDisplayed(meaning));
        }
        let (signal, signal_t_ms) = self.pending_signal.take().expect("signal sent this round");
        let record = RoundRecord {
            round: self.round,
            sender: self.current_sender(),
            pair: trial.pair.clone(),
            prompt: trial.prompt.clone(),
            correct: meaning == trial.prompt,
            guess: meaning,
            signal,
            signal_t_ms,
            guess_t_ms: t_ms,
        };
        self.history.push(record);
        self.phase = RoundPhase::FeedbackShown;
        Ok(self.history.last().expect("just pushed"))
    }

    /// Leaves the feedback screen. Returns true if that finished the game.
    pub fn advance(&mut self) -> Result<bool, EngineError> {
        self.ensure_active()?;
        if self.phase != RoundPhase::FeedbackShown {
            return Err(EngineError::WrongPhase { actual: self.phase });
        }
        self.round += 1;
        self.phase = RoundPhase::AwaitingSignal;
        Ok(self.is_finished())
    }

    pub fn abandon(&mut self) {
        self.abandoned = true;
    }

    pub fn summary(&self) -> GameSummary {
        game_summary(self)
    }
}

/// Scores derived solely from the round history.
pub fn game_summary(state: &GameState) -> GameSummary {
    let mut s = GameSummary {
        finished: state.is_finished(),
        ..GameSummary::default()
    };
    for r in &state.history {
        s.rounds_played += 1;
        if r.correct {
            s.total_correct += 1;
            let main = state
                .schedule
                .trial(r.round)
                .is_some_and(|t| t.phase == Phase::Main);
            if main {
                s.post_burn_in_correct += 1;
            }
        }
    }
    s
}

/// A game together with the log of everything that happened in it.
#[derive(Debug, Clone)]
pub struct Game {
    pub meta: GameMeta,
    pub state: GameState,
    pub log: DyadLog,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("event {index} (line {}): {message}", index + 1)]
pub struct ReplayError {
    /// 0-based index into the log's events.
    pub index: usize,
    pub message: String,
}

impl Game {
    pub fn start(
        meta: GameMeta,
        stimulus: StimulusBundle,
        schedule: TrialSchedule,
        seed: u64,
        t_ms: u64,
    ) -> Result<Game, EngineError> {
        let state = new_game(stimulus, schedule, seed)?;
        let log = DyadLog {
            events: vec![LogEvent::game_start(&meta, state.first_sender, seed, t_ms)],
        };
        Ok(Game { meta, state, log })
    }

    fn push(&mut self, e: LogEvent) {
        self.log.events.push(e);
    }

    pub fn send(&mut self, player: Player, signal: Signal, t_ms: u64) -> Result<(), EngineError> {
        let round = self.state.round;
        self.state.apply_send(player, signal.clone(), t_ms)?;
        self.push(LogEvent::send(round, player, &signal, t_ms));
        Ok(())
    }

    /// Records the guess; the engine's feedback event follows it in the log.
    pub fn guess(&mut self, player: Player, meaning: Meaning, t_ms: u64) -> Result<Feedback, EngineError> {
        let round = self.state.round;
        let rec = self.state.apply_guess(player, meaning.clone(), t_ms)?.clone();
        self.push(LogEvent::guess(round, player, &meaning, t_ms));
        let fb = FeedbackPayload {
            correct: rec.correct,
            guess: rec.guess.clone(),
            pair: rec.pair.clone(),
            prompt: rec.prompt.clone(),
            signal: rec.signal.clone(),
        };
        self.push(LogEvent::feedback(round, &fb, t_ms));
        Ok(Feedback {
            signal: rec.signal,
            prompt: rec.prompt,
            guess: rec.guess,
            correct: rec.correct,
        })
    }

    /// Moves past the feedback screen; logs `game_end` after the last round.
    pub fn advance(&mut self, t_ms: u64) -> Result<bool, EngineError> {
        let round = self.state.round;
        let finished = self.state.advance()?;
        self.push(LogEvent::advance(round, t_ms));
        if finished {
            let s = self.state.summary();
            self.push(LogEvent::game_end(round, s.total_correct, s.post_burn_in_correct, t_ms));
        }
        Ok(finished)
    }

    pub fn dropout(&mut self, player: Option<Player>, reason: &str, t_ms: u64) -> Result<(), EngineError> {
        if self.state.is_abandoned() {
            return Err(EngineError::Abandoned);
        }
        if self.state.is_finished() {
            return Err(EngineError::Finished);
        }
        self.state.abandon();
        let round = self.state.round;
        self.push(LogEvent::dropout(round, player, reason, t_ms));
        Ok(())
    }

    /// Re-executes `log` against the stimulus and schedule. Every event the
    /// engine generates must match the logged one exactly, so a successful
    /// replay reproduces the log byte for byte.
    pub fn replay(
        stimulus: StimulusBundle,
        schedule: TrialSchedule,
        log: &DyadLog,
    ) -> Result<Game, ReplayError> {
        let err = |index: usize, message: String| ReplayError { index, message };
        let first = log
            .events
            .first()
            .ok_or_else(|| err(0, "empty log".into()))?;
        if first.event != EventKind::GameStart {
            return Err(err(0, format!("expected game_start, found {}", first.event)));
        }
        let start: GameStartPayload = serde_json::from_value(first.payload.clone())
            .map_err(|e| err(0, format!("bad game_start payload: {e}")))?;
        let meta = GameMeta {
            dyad: start.dyad.clone(),
            condition: start.condition,
        };
        let mut game = Game::start(meta, stimulus, schedule, start.seed, first.t_ms)
            .map_err(|e| err(0, e.to_string()))?;

        for (i, e) in log.events.iter().enumerate() {
            if i >= game.log.events.len() {
                if e.round != game.state.round {
                    return Err(err(
                        i,
                        format!("event for round {} during round {}", e.round, game.state.round),
                    ));
                }
                let res = match e.event {
                    EventKind::Send => {
                        let (p, s) = (e.player, e.signal());
                        match (p, s) {
                            (Some(p), Some(s)) => game.send(p, s, e.t_ms),
                            _ => return Err(err(i, "send without player or signal".into())),
                        }
                    }
                    EventKind::Guess => match (e.player, e.meaning()) {
                        (Some(p), Some(m)) => game.guess(p, m, e.t_ms).map(|_| ()),
                        _ => return Err(err(i, "guess without player or meaning".into())),
                    },
                    EventKind::Advance => game.advance(e.t_ms).map(|_| ()),
                    EventKind::Dropout => {
                        let reason = e.payload.get("reason").and_then(|r| r.as_str()).unwrap_or("");
                        game.dropout(e.player, reason, e.t_ms)
                    }
                    other => {
                        return Err(err(i, format!("unexpected {other} event")));
                    }
                };
                res.map_err(|x| err(i, x.to_string()))?;
            }
            if game.log.events[i] != *e {
                return Err(err(
                    i,
                    format!(
                        "logged `{}` but the engine produced `{}`",
                        e.to_line(),
                        game.log.events[i].to_line()
                    ),
                ));
            }
        }
        if game.log.events.len() != log.events.len() {
            let i = log.events.len();
            return Err(err(
                i,
                format!("log ends before the engine's `{}`", game.log.events[i].to_line()),
            ));
        }
        Ok(game)
    }
}
