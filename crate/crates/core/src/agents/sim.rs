use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dyad_agent_receiver, dyad_agent_sender, naming_model_step, Agent, StrategyConfig, StrategyKind};
use crate::engine::{DyadLog, EngineError, Game, GameMeta};
use crate::lexicon::{MeaningSpace, StimulusBundle};
use crate::schedule::{build_schedule, pair_frequency_table, Phase, ScheduleError, TrialSchedule};
use crate::types::{Condition, Player};

// Simulated clocks: every round takes one second.
fn t_send(round: u32) -> u64 {
    u64::from(round) * 1000 + 300
}
fn t_guess(round: u32) -> u64 {
    u64::from(round) * 1000 + 700
}
fn t_advance(round: u32) -> u64 {
    u64::from(round) * 1000 + 900
}

/// Plays a full game with two agents. Both observe every feedback screen.
pub fn run_dyad_simulation(
    meta: GameMeta,
    stimulus: &StimulusBundle,
    schedule: &TrialSchedule,
    cfg_a: StrategyConfig,
    cfg_b: StrategyConfig,
    seed: u64,
) -> Result<DyadLog, EngineError> {
    let mut game = Game::start(meta, stimulus.clone(), schedule.clone(), seed, 0)?;
    let mut agents = [Agent::new(cfg_a, stimulus), Agent::new(cfg_b, stimulus)];
    let idx = |p: Player| match p {
        Player::A => 0,
        Player::B => 1,
    };
    while !game.state.is_finished() {
        let round = game.state.round;
        let sender = game.state.current_sender();
        let receiver = sender.other();
        let view = game.state.view_for(sender)?;
        let signal = dyad_agent_sender(&mut agents[idx(sender)], &view)
            .expect("sender view offers signals");
        game.send(sender, signal, t_send(round))?;
        let view = game.state.view_for(receiver)?;
        let guess = dyad_agent_receiver(&mut agents[idx(receiver)], &view)
            .expect("receiver view offers meanings");
        let fb = game.guess(receiver, guess, t_guess(round))?;
        for a in &mut agents {
            a.observe(&fb);
        }
        game.advance(t_advance(round))?;
    }
    Ok(game.log)
}

/// The single-agent naming model over a schedule. The agent speaks in every
/// round and the partner's guess is always the prompt.
pub fn run_naming_model(
    meta: GameMeta,
    stimulus: &StimulusBundle,
    schedule: &TrialSchedule,
    cfg: StrategyConfig,
    seed: u64,
) -> Result<DyadLog, EngineError> {
    let mut game = Game::start(meta, stimulus.clone(), schedule.clone(), seed, 0)?;
    let mut agent = Agent::new(cfg, stimulus);
    while !game.state.is_finished() {
        let round = game.state.round;
        let sender = game.state.current_sender();
        let prompt = game.state.current_trial().expect("active").prompt.clone();
        let signal = naming_model_step(&mut agent, round, &prompt);
        game.send(sender, signal, t_send(round))?;
        game.guess(sender.other(), prompt, t_guess(round))?;
        game.advance(t_advance(round))?;
    }
    Ok(game.log)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub dyad: String,
    pub strategy: StrategyKind,
    pub n_signals: usize,
    pub repeat: u32,
    pub agent_seed: u64,
    pub schedule_seed: u64,
    pub game_seed: u64,
}

/// Lists every run of a grid so it can be re-run cell by cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridManifest {
    pub seed: u64,
    pub condition: Condition,
    pub repeats: u32,
    pub cells: Vec<GridCell>,
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub manifest: GridManifest,
    /// In manifest order.
    pub logs: Vec<DyadLog>,
}

/// Runs the naming model for every strategy and every signal-set size from 1
/// up to the stimulus's signal count, `repeats` times each. Each run gets a
/// fresh schedule for `condition`.
pub fn run_naming_grid(
    stimulus: &StimulusBundle,
    condition: Condition,
    strategies: &[StrategyKind],
    repeats: u32,
    seed: u64,
) -> Result<GridRun, ScheduleError> {
    let table = pair_frequency_table(&stimulus.meaning_space, condition)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = Vec::new();
    for &strategy in strategies {
        for n_signals in 1..=stimulus.signal_set.len() {
            for repeat in 0..repeats {
                cells.push(GridCell {
                    dyad: format!("{strategy}-n{n_signals:02}-r{repeat:02}"),
                    strategy,
                    n_signals,
                    repeat,
                    agent_seed: rng.next_u64(),
                    schedule_seed: rng.next_u64(),
                    game_seed: rng.next_u64(),
                });
            }
        }
    }
    let logs = cells
        .par_iter()
        .map(|c| {
            let schedule = build_schedule(&table, c.schedule_seed);
            let meta = GameMeta {
                dyad: c.dyad.clone(),
                condition,
            };
            let cfg = StrategyConfig::new(c.strategy, c.n_signals, c.agent_seed);
            run_naming_model(meta, stimulus, &schedule, cfg, c.game_seed)
                .expect("naming agents only make legal moves")
        })
        .collect();
    Ok(GridRun {
        manifest: GridManifest {
            seed,
            condition,
            repeats,
            cells,
        },
        logs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeilingEstimate {
    pub runs: usize,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    /// Mean number of target-pair trials after the burn-in.
    pub mean_target_trials: f64,
}

/// Expected accuracy after the burn-in for a dyad that shares one signal per
/// target pair and a unique signal for every other meaning: every trial is
/// won except target-pair trials, which are a coin flip. Averaged over
/// `runs` freshly drawn target-condition schedules.
pub fn colexify_all_accuracy(
    space: &MeaningSpace,
    condition: Condition,
    runs: usize,
    seed: u64,
) -> Result<CeilingEstimate, ScheduleError> {
    let table = pair_frequency_table(space, condition)?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..runs).map(|_| master.next_u64()).collect();
    let results: Vec<(f64, usize)> = seeds
        .par_iter()
        .map(|&s| {
            let schedule = build_schedule(&table, s);
            let mut coin = ChaCha8Rng::seed_from_u64(s ^ 0x9e37_79b9_7f4a_7c15);
            let (mut correct, mut total, mut target) = (0usize, 0usize, 0usize);
            for t in schedule.trials.iter().filter(|t| t.phase == Phase::Main) {
                total += 1;
                if space.is_target_pair(&t.pair) {
                    target += 1;
                    if coin.random_bool(0.5) {
                        correct += 1;
                    }
                } else {
                    correct += 1;
                }
            }
            (correct as f64 / total as f64, target)
        })
        .collect();
    let n = results.len().max(1) as f64;
    Ok(CeilingEstimate {
        runs,
        mean_accuracy: results.iter().map(|r| r.0).sum::<f64>() / n,
        min_accuracy: results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        max_accuracy: results.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max),
        mean_target_trials: results.iter().map(|r| r.1 as f64).sum::<f64>() / n,
    })
}
