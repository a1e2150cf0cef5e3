//! Simulated players: the single-agent naming model and agents that play the
//! full two-player game.

mod sim;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Feedback, PlayerView, Role};
use crate::lexicon::StimulusBundle;
use crate::types::{Meaning, MeaningPair, Signal};

pub use sim::{
    colexify_all_accuracy, run_dyad_simulation, run_naming_grid, run_naming_model, CeilingEstimate,
    GridCell, GridManifest, GridRun,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Degenerate,
    Random,
    FixedPerfect,
    FixedColexifyPairs,
    FixedColexifyPairsAvoidant,
    RationalFull,
    RationalRecent,
    MisleadingFull,
    MisleadingRecent,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 9] = [
        StrategyKind::Degenerate,
        StrategyKind::Random,
        StrategyKind::FixedPerfect,
        StrategyKind::FixedColexifyPairs,
        StrategyKind::FixedColexifyPairsAvoidant,
        StrategyKind::RationalFull,
        StrategyKind::RationalRecent,
        StrategyKind::MisleadingFull,
        StrategyKind::MisleadingRecent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Degenerate => "degenerate",
            StrategyKind::Random => "random",
            StrategyKind::FixedPerfect => "fixed_perfect",
            StrategyKind::FixedColexifyPairs => "fixed_colexify_pairs",
            StrategyKind::FixedColexifyPairsAvoidant => "fixed_colexify_pairs_avoidant",
            StrategyKind::RationalFull => "rational_full",
            StrategyKind::RationalRecent => "rational_recent",
            StrategyKind::MisleadingFull => "misleading_full",
            StrategyKind::MisleadingRecent => "misleading_recent",
        }
    }

    fn uses_recency(self) -> bool {
        matches!(self, StrategyKind::RationalRecent | StrategyKind::MisleadingRecent)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// Switch to another strategy from `from_round` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSwitch {
    pub from_round: u32,
    pub kind: StrategyKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// How many of the game's signals the agent may use, taken from the front
    /// of the signal set.
    pub n_signals: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub then: Option<PhaseSwitch>,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, n_signals: usize, seed: u64) -> StrategyConfig {
        StrategyConfig {
            kind,
            n_signals,
            seed,
            then: None,
        }
    }

    pub fn switching_to(mut self, kind: StrategyKind, from_round: u32) -> StrategyConfig {
        self.then = Some(PhaseSwitch { from_round, kind });
        self
    }

    pub fn kind_at(&self, round: u32) -> StrategyKind {
        match self.then {
            Some(p) if round >= p.from_round => p.kind,
            _ => self.kind,
        }
    }
}

/// What an agent remembers about signal use.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexiconMemory {
    pub usage_counts: BTreeMap<(Signal, Meaning), u32>,
    pub last_signal_for: BTreeMap<Meaning, Signal>,
    pub last_meaning_for: BTreeMap<Signal, Meaning>,
}

impl LexiconMemory {
    pub fn count(&self, s: &Signal, m: &Meaning) -> u32 {
        self.usage_counts
            .get(&(s.clone(), m.clone()))
            .copied()
            .unwrap_or(0)
    }

    /// Association strength under either the full history or only the most
    /// recent use of `s`.
    pub fn strength(&self, s: &Signal, m: &Meaning, recent: bool) -> i64 {
        if recent {
            i64::from(self.last_meaning_for.get(s) == Some(m))
        } else {
            i64::from(self.count(s, m))
        }
    }

    /// `s` expressed `meaning` in a round that was understood.
    pub fn record_use(&mut self, s: &Signal, meaning: &Meaning) {
        *self
            .usage_counts
            .entry((s.clone(), meaning.clone()))
            .or_insert(0) += 1;
        self.last_signal_for.insert(meaning.clone(), s.clone());
        self.last_meaning_for.insert(s.clone(), meaning.clone());
    }

    /// Updates from a feedback screen. A misunderstanding also weakens the
    /// link between the signal and the wrongly guessed meaning.
    pub fn observe(&mut self, fb: &Feedback) {
        self.record_use(&fb.signal, &fb.prompt);
        if !fb.correct {
            if let Some(c) = self
                .usage_counts
                .get_mut(&(fb.signal.clone(), fb.guess.clone()))
            {
                *c = c.saturating_sub(1);
            }
        }
    }
}

/// `count(s, m) - max over other meanings m' of count(s, m')`.
pub fn rational_score(
    mem: &LexiconMemory,
    s: &Signal,
    meaning: &Meaning,
    meanings: &[Meaning],
    recent: bool,
) -> i64 {
    let rival = meanings
        .iter()
        .filter(|m| *m != meaning)
        .map(|m| mem.strength(s, m, recent))
        .max()
        .unwrap_or(0);
    mem.strength(s, meaning, recent) - rival
}

/// An agent with its own memory, random stream and (for fixed strategies)
/// a fixed meaning-to-signal assignment.
#[derive(Debug, Clone)]
pub struct Agent {
    pub cfg: StrategyConfig,
    pub memory: LexiconMemory,
    meanings: Vec<Meaning>,
    allowed: Vec<Signal>,
    degenerate: Signal,
    perfect: BTreeMap<Meaning, Signal>,
    paired: BTreeMap<Meaning, Signal>,
    pair_signals: BTreeSet<Signal>,
    rng: ChaCha8Rng,
}

impl Agent {
    /// Panics if `cfg.n_signals` is zero or larger than the signal set.
    pub fn new(cfg: StrategyConfig, stimulus: &StimulusBundle) -> Agent {
        let signals = &stimulus.signal_set.signals;
        assert!(
            cfg.n_signals >= 1 && cfg.n_signals <= signals.len(),
            "n_signals {} outside 1..={}",
            cfg.n_signals,
            signals.len()
        );
        let allowed: Vec<Signal> = signals[..cfg.n_signals].to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let space = &stimulus.meaning_space;
        let meanings = space.meanings();

        let degenerate = allowed.choose(&mut rng).expect("non-empty").clone();

        let mut order = meanings.clone();
        order.shuffle(&mut rng);
        let mut shuffled_signals = allowed.clone();
        shuffled_signals.shuffle(&mut rng);
        let perfect = order
            .iter()
            .cloned()
            .zip(shuffled_signals.iter().cloned())
            .collect();

        let mut pairs: Vec<&MeaningPair> = space.target_pairs.iter().collect();
        pairs.shuffle(&mut rng);
        let mut paired = BTreeMap::new();
        let mut pair_signals = BTreeSet::new();
        for (i, p) in pairs.into_iter().enumerate() {
            let s = shuffled_signals[i % shuffled_signals.len()].clone();
            for m in p.members() {
                paired.insert(m.clone(), s.clone());
            }
            pair_signals.insert(s);
        }

        Agent {
            cfg,
            memory: LexiconMemory::default(),
            meanings,
            allowed,
            degenerate,
            perfect,
            paired,
            pair_signals,
            rng,
        }
    }

    pub fn allowed_signals(&self) -> &[Signal] {
        &self.allowed
    }

    fn uniform(&mut self, from: &[Signal]) -> Signal {
        from.choose(&mut self.rng).expect("non-empty").clone()
    }

    /// Scores every allowed signal and picks the best (or worst) one. With a
    /// displayed competitor the score is the margin over that competitor,
    /// and the margin over all meanings only breaks ties.
    fn by_score(
        &mut self,
        meaning: &Meaning,
        competitor: Option<&Meaning>,
        recent: bool,
        maximize: bool,
    ) -> Signal {
        let scored: Vec<((i64, i64), &Signal)> = self
            .allowed
            .iter()
            .map(|s| {
                let global = rational_score(&self.memory, s, meaning, &self.meanings, recent);
                let local = match competitor {
                    Some(c) => rational_score(&self.memory, s, meaning, std::slice::from_ref(c), recent),
                    None => global,
                };
                ((local, global), s)
            })
            .collect();
        let best = if maximize {
            scored.iter().map(|(v, _)| *v).max()
        } else {
            scored.iter().map(|(v, _)| *v).min()
        }
        .expect("non-empty");
        let tied: Vec<Signal> = scored
            .into_iter()
            .filter(|(v, _)| *v == best)
            .map(|(_, s)| s.clone())
            .collect();
        self.uniform(&tied)
    }

    /// Picks a signal for `meaning` in `round` according to the strategy.
    pub fn produce(&mut self, round: u32, meaning: &Meaning) -> Signal {
        self.produce_in_context(round, meaning, None)
    }

    /// As [`Agent::produce`], but the scoring strategies weigh signals
    /// against the other meaning on screen.
    pub fn produce_in_context(&mut self, round: u32, meaning: &Meaning, competitor: Option<&Meaning>) -> Signal {
        let kind = self.cfg.kind_at(round);
        match kind {
            StrategyKind::Degenerate => self.degenerate.clone(),
            StrategyKind::Random => {
                let all = self.allowed.clone();
                self.uniform(&all)
            }
            StrategyKind::FixedPerfect => match self.perfect.get(meaning) {
                Some(s) => s.clone(),
                None => {
                    let all = self.allowed.clone();
                    self.uniform(&all)
                }
            },
            StrategyKind::FixedColexifyPairs | StrategyKind::FixedColexifyPairsAvoidant => {
                if let Some(s) = self.paired.get(meaning) {
                    return s.clone();
                }
                let mut pool = self.allowed.clone();
                if kind == StrategyKind::FixedColexifyPairsAvoidant {
                    let rest: Vec<Signal> = pool
                        .iter()
                        .filter(|s| !self.pair_signals.contains(*s))
                        .cloned()
                        .collect();
                    if !rest.is_empty() {
                        pool = rest;
                    }
                }
                self.uniform(&pool)
            }
            StrategyKind::RationalFull | StrategyKind::RationalRecent => {
                self.by_score(meaning, competitor, kind.uses_recency(), true)
            }
            StrategyKind::MisleadingFull | StrategyKind::MisleadingRecent => {
                self.by_score(meaning, competitor, kind.uses_recency(), false)
            }
        }
    }

    /// Interprets `signal` as one of the two displayed meanings.
    pub fn interpret(&mut self, round: u32, pair: &[Meaning; 2], signal: &Signal) -> Meaning {
        let recent = self.cfg.kind_at(round).uses_recency();
        let a = self.memory.strength(signal, &pair[0], recent);
        let b = self.memory.strength(signal, &pair[1], recent);
        match a.cmp(&b) {
            std::cmp::Ordering::Greater => pair[0].clone(),
            std::cmp::Ordering::Less => pair[1].clone(),
            std::cmp::Ordering::Equal => pair.choose(&mut self.rng).expect("two").clone(),
        }
    }

    pub fn observe(&mut self, fb: &Feedback) {
        self.memory.observe(fb);
    }
}

/// One step of the single-agent naming model: produce a signal for
/// `meaning` and remember it as understood.
pub fn naming_model_step(agent: &mut Agent, round: u32, meaning: &Meaning) -> Signal {
    let s = agent.produce(round, meaning);
    agent.memory.record_use(&s, meaning);
    s
}

/// The sender's move for a live view: the prompt is scored against the other
/// displayed meaning. Returns `None` unless the view asks this player for a
/// signal.
pub fn dyad_agent_sender(agent: &mut Agent, view: &PlayerView) -> Option<Signal> {
    if view.role != Role::Sender || view.signal_choices.is_empty() {
        return None;
    }
    let prompt = view.prompt.as_ref()?;
    let competitor = view.meanings.iter().find(|m| *m != prompt);
    Some(agent.produce_in_context(view.round, prompt, competitor))
}

/// The receiver's move for a live view. Returns `None` unless the view asks
/// this player for a guess.
pub fn dyad_agent_receiver(agent: &mut Agent, view: &PlayerView) -> Option<Meaning> {
    if view.role != Role::Receiver || view.meaning_choices.len() != 2 {
        return None;
    }
    let signal = view.signal.as_ref()?;
    let pair = [view.meaning_choices[0].clone(), view.meaning_choices[1].clone()];
    Some(agent.interpret(view.round, &pair, signal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{generate_stimulus, Lexicon, WordList};
    use crate::types::Variant;

    fn stimulus(n: usize) -> StimulusBundle {
        generate_stimulus(&Lexicon::bundled(), &WordList::bundled(), Variant::Standard, n, 3).unwrap()
    }

    #[test]
    fn degenerate_always_repeats() {
        let st = stimulus(7);
        let mut a = Agent::new(StrategyConfig::new(StrategyKind::Degenerate, 7, 1), &st);
        let ms = st.meaning_space.meanings();
        let first = a.produce(1, &ms[0]);
        for (i, m) in ms.iter().cycle().take(50).enumerate() {
            assert_eq!(a.produce(i as u32 + 1, m), first);
        }
    }

    #[test]
    fn fixed_perfect_with_ten_signals_is_injective() {
        let st = stimulus(10);
        let mut a = Agent::new(StrategyConfig::new(StrategyKind::FixedPerfect, 10, 4), &st);
        let ms = st.meaning_space.meanings();
        let mut map = BTreeMap::new();
        for r in 1..=135u32 {
            let m = &ms[(r as usize * 7) % 10];
            let s = a.produce(r, m);
            assert_eq!(map.entry(m.clone()).or_insert(s.clone()), &s);
        }
        let distinct: BTreeSet<_> = map.values().collect();
        assert_eq!(distinct.len(), 10);
    }

    #[test]
    fn colexify_pairs_share_signals() {
        let st = stimulus(7);
        for kind in [StrategyKind::FixedColexifyPairs, StrategyKind::FixedColexifyPairsAvoidant] {
            let mut a = Agent::new(StrategyConfig::new(kind, 7, 9), &st);
            for p in &st.meaning_space.target_pairs {
                let [x, y] = p.members();
                assert_eq!(a.produce(1, x), a.produce(2, y));
            }
        }
        let mut a = Agent::new(
            StrategyConfig::new(StrategyKind::FixedColexifyPairsAvoidant, 7, 9),
            &st,
        );
        let pair_sigs = a.pair_signals.clone();
        for d in st.meaning_space.distractors.clone() {
            for r in 0..20 {
                assert!(!pair_sigs.contains(&a.produce(r, &d)));
            }
        }
    }

    #[test]
    fn rational_prefers_established_signal() {
        let st = stimulus(7);
        let mut a = Agent::new(StrategyConfig::new(StrategyKind::RationalFull, 7, 2), &st);
        let rain = st.meaning_space.meanings()[0].clone();
        let s1 = st.signal_set.signals[3].clone();
        for _ in 0..3 {
            a.memory.record_use(&s1, &rain);
        }
        // s1 scores 3, every other signal 0.
        for r in 1..20 {
            assert_eq!(a.produce(r, &rain), s1);
        }
        let mut m = a.clone();
        m.cfg.kind = StrategyKind::MisleadingFull;
        for r in 1..20 {
            assert_ne!(m.produce(r, &rain), s1);
        }
    }

    #[test]
    fn receiver_follows_counts_and_flips_coins_when_ignorant() {
        let st = stimulus(7);
        let ms = st.meaning_space.meanings();
        let pair = [ms[0].clone(), ms[5].clone()];
        let fuwo = st.signal_set.signals[0].clone();
        let mut a = Agent::new(StrategyConfig::new(StrategyKind::RationalFull, 7, 8), &st);
        let picks: BTreeSet<Meaning> = (0..64).map(|r| a.interpret(r, &pair, &fuwo)).collect();
        assert_eq!(picks.len(), 2);
        a.memory.record_use(&fuwo, &ms[0]);
        for r in 0..20 {
            assert_eq!(a.interpret(r, &pair, &fuwo), ms[0]);
        }
    }

    #[test]
    fn failed_rounds_weaken_the_wrong_link() {
        let mut mem = LexiconMemory::default();
        let s = Signal::from("fuwo");
        let (a, b) = (Meaning::from("rain"), Meaning::from("drizzle"));
        mem.record_use(&s, &b);
        mem.observe(&Feedback {
            signal: s.clone(),
            prompt: a.clone(),
            guess: b.clone(),
            correct: false,
        });
        assert_eq!(mem.count(&s, &a), 1);
        assert_eq!(mem.count(&s, &b), 0);
        assert_eq!(mem.last_meaning_for[&s], a);
        mem.observe(&Feedback {
            signal: s.clone(),
            prompt: a.clone(),
            guess: b.clone(),
            correct: false,
        });
        assert_eq!(mem.count(&s, &b), 0);
    }

    #[test]
    fn phase_switch() {
        let cfg = StrategyConfig::new(StrategyKind::Random, 7, 0)
            .switching_to(StrategyKind::Degenerate, 60);
        assert_eq!(cfg.kind_at(59), StrategyKind::Random);
        assert_eq!(cfg.kind_at(60), StrategyKind::Degenerate);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<StrategyConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn strategy_names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
            assert_eq!(serde_json::to_value(k).unwrap(), k.as_str());
        }
    }
}
