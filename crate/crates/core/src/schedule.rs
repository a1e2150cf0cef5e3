//! Trial schedules implementing the communicative-need manipulation.
//!
//! A [`PairFrequencyTable`] fixes how often each of the 45 meaning pairs is
//! displayed; [`build_schedule`] turns it into a 135-round sequence whose
//! first 45 rounds (the burn-in) hold a third of every pair's occurrences, as
//! evenly as integer counts allow.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::MeaningSpace;
use crate::types::{Condition, Meaning, MeaningPair};

pub const ROUNDS: usize = 135;
pub const BURN_IN_LENGTH: usize = 45;
pub const CO_DISPLAYS_PER_MEANING: u32 = 27;

pub const BASELINE_PAIR_COUNT: u32 = 3;
pub const TARGET_PAIR_COUNT: u32 = 11;
pub const DISTRACTOR_PAIR_COUNT: u32 = 5;
pub const MIXED_PAIR_COUNT: u32 = 2;

/// Bounds on how often each meaning is the one to communicate.
pub const MIN_PROMPTS_PER_MEANING: u32 = 12;
pub const MAX_PROMPTS_PER_MEANING: u32 = 15;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("condition {condition} requires the {required} variant, meaning space is {actual}")]
    Incompatible {
        condition: Condition,
        required: crate::types::Variant,
        actual: crate::types::Variant,
    },
    #[error("invalid frequency table: {0}")]
    InvalidTable(String),
    #[error("malformed schedule file: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFrequencyTable {
    pub condition: Condition,
    pub counts: BTreeMap<MeaningPair, u32>,
}

impl PairFrequencyTable {
    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn count(&self, pair: &MeaningPair) -> u32 {
        self.counts.get(pair).copied().unwrap_or(0)
    }

    /// Number of rounds in which `m` is on screen.
    pub fn co_displays(&self, m: &Meaning) -> u32 {
        self.counts
            .iter()
            .filter(|(p, _)| p.contains(m))
            .map(|(_, c)| c)
            .sum()
    }

    pub fn meanings(&self) -> BTreeSet<Meaning> {
        self.counts
            .keys()
            .flat_map(|p| p.members().map(Clone::clone))
            .collect()
    }
}

/// Pair display frequencies for `condition` over `space`.
pub fn pair_frequency_table(
    space: &MeaningSpace,
    condition: Condition,
) -> Result<PairFrequencyTable, ScheduleError> {
    let required = condition.required_variant();
    if space.variant != required {
        return Err(ScheduleError::Incompatible {
            condition,
            required,
            actual: space.variant,
        });
    }
    let counts = space
        .all_pairs()
        .into_iter()
        .map(|pair| {
            let c = if condition.is_baseline_family() {
                BASELINE_PAIR_COUNT
            } else if space.is_target_pair(&pair) {
                TARGET_PAIR_COUNT
            } else if pair.members().iter().all(|m| space.distractors.contains(m)) {
                DISTRACTOR_PAIR_COUNT
            } else {
                MIXED_PAIR_COUNT
            };
            (pair, c)
        })
        .collect();
    Ok(PairFrequencyTable { condition, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    BurnIn,
    Main,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub round: u32,
    pub pair: MeaningPair,
    pub prompt: Meaning,
    pub phase: Phase,
}

/// Ordered list of trials; serialized as a bare JSON array of
/// `{round, pair, prompt, phase}` objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrialSchedule {
    pub trials: Vec<Trial>,
}

impl TrialSchedule {
    pub const BURN_IN_LENGTH: usize = BURN_IN_LENGTH;

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Trial for a 1-based round number.
    pub fn trial(&self, round: u32) -> Option<&Trial> {
        (round as usize)
            .checked_sub(1)
            .and_then(|i| self.trials.get(i))
    }

    pub fn meanings(&self) -> BTreeSet<Meaning> {
        self.trials
            .iter()
            .flat_map(|t| t.pair.members().map(Clone::clone))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<TrialSchedule, ScheduleError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrialSchedule, ScheduleError> {
        TrialSchedule::from_json(&fs::read_to_string(path)?)
    }
}

/// Chooses, for every pair with an odd count, which member gets the extra
/// prompt, so that each meaning's extras differ from half its odd-pair degree
/// by at most one. Odd-degree vertices are tied to a virtual vertex, the graph
/// is decomposed into closed trails by random walks, and each edge is oriented
/// along its walk.
fn orient_odd_pairs(pairs: &[MeaningPair], rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut vertex: BTreeMap<&Meaning, usize> = BTreeMap::new();
    for p in pairs {
        for m in p.members() {
            let next = vertex.len();
            vertex.entry(m).or_insert(next);
        }
    }
    let virt = vertex.len();
    // (u, v, index into pairs or None for virtual edges)
    let mut edges: Vec<(usize, usize, Option<usize>)> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| (vertex[p.first()], vertex[p.second()], Some(i)))
        .collect();
    let mut degree = vec![0usize; virt + 1];
    for &(u, v, _) in &edges {
        degree[u] += 1;
        degree[v] += 1;
    }
    for (u, d) in degree.iter().enumerate().take(virt) {
        if d % 2 == 1 {
            edges.push((u, virt, None));
        }
    }
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); virt + 1];
    for (e, &(u, v, _)) in edges.iter().enumerate() {
        incident[u].push(e);
        incident[v].push(e);
    }
    for list in &mut incident {
        list.shuffle(rng);
    }

    let mut used = vec![false; edges.len()];
    // true: first member of the pair receives the extra prompt
    let mut first_gets_extra = vec![false; pairs.len()];
    let mut starts: Vec<usize> = (0..=virt).collect();
    starts.shuffle(rng);
    for start in starts {
        loop {
            let mut trail: Vec<(usize, usize)> = Vec::new();
            let mut at = start;
            while let Some(&e) = incident[at].iter().find(|&&e| !used[e]) {
                used[e] = true;
                let (u, v, _) = edges[e];
                let to = if u == at { v } else { u };
                trail.push((e, at));
                at = to;
            }
            if trail.is_empty() {
                break;
            }
            let reverse = rng.random_bool(0.5);
            for (e, from) in trail {
                if let (u, _, Some(i)) = edges[e] {
                    let from_first = from == u;
                    first_gets_extra[i] = from_first != reverse;
                }
            }
        }
    }
    first_gets_extra
}

/// Builds a 135-round schedule realizing `table`, deterministically from
/// `seed`.
pub fn build_schedule(table: &PairFrequencyTable, seed: u64) -> TrialSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(&MeaningPair, u32)> = table.counts.iter().map(|(p, c)| (p, *c)).collect();

    // Burn-in share: floor(c/3) each, then one extra slot for pairs in
    // descending remainder order (seeded tie-break) until the burn-in is full.
    let mut burn: Vec<u32> = pairs.iter().map(|(_, c)| c / 3).collect();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| std::cmp::Reverse(pairs[i].1 % 3));
    let target_burn = (table.total() as usize * BURN_IN_LENGTH / ROUNDS) as u32;
    let mut missing = target_burn.saturating_sub(burn.iter().sum());
    for i in order {
        if missing == 0 {
            break;
        }
        if pairs[i].1 % 3 > 0 {
            burn[i] += 1;
            missing -= 1;
        }
    }

    let odd: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].1 % 2 == 1).collect();
    let odd_pairs: Vec<MeaningPair> = odd.iter().map(|&i| pairs[i].0.clone()).collect();
    let orientation = orient_odd_pairs(&odd_pairs, &mut rng);
    let mut first_extra = vec![false; pairs.len()];
    for (k, &i) in odd.iter().enumerate() {
        first_extra[i] = orientation[k];
    }

    let mut burn_in: Vec<(MeaningPair, Meaning)> = Vec::with_capacity(BURN_IN_LENGTH);
    let mut main: Vec<(MeaningPair, Meaning)> = Vec::with_capacity(ROUNDS - BURN_IN_LENGTH);
    for (i, (pair, count)) in pairs.iter().enumerate() {
        let half = count / 2;
        let first_n = if count % 2 == 1 && first_extra[i] { half + 1 } else { half };
        let mut prompts: Vec<Meaning> = std::iter::repeat_n(pair.first().clone(), first_n as usize)
            .chain(std::iter::repeat_n(
                pair.second().clone(),
                (count - first_n) as usize,
            ))
            .collect();
        prompts.shuffle(&mut rng);
        for (k, prompt) in prompts.into_iter().enumerate() {
            let slot = ((*pair).clone(), prompt);
            if (k as u32) < burn[i] {
                burn_in.push(slot);
            } else {
                main.push(slot);
            }
        }
    }
    burn_in.shuffle(&mut rng);
    main.shuffle(&mut rng);

    let trials = burn_in
        .into_iter()
        .map(|s| (s, Phase::BurnIn))
        .chain(main.into_iter().map(|s| (s, Phase::Main)))
        .enumerate()
        .map(|(i, ((pair, prompt), phase))| Trial {
            round: i as u32 + 1,
            pair,
            prompt,
            phase,
        })
        .collect();
    TrialSchedule { trials }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Length { expected: usize, found: usize },
    BurnInLength { expected: usize, found: usize },
    PhaseOrder { round: u32 },
    RoundNumbering { index: usize, round: u32 },
    PromptNotInPair { round: u32 },
    PairCount { pair: MeaningPair, expected: u32, found: u32 },
    UnexpectedPair { pair: MeaningPair },
    CoDisplays { meaning: Meaning, expected: u32, found: u32 },
    BurnInSplit { pair: MeaningPair, total: u32, burn_in: u32 },
    PromptBalance { meaning: Meaning, prompts: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Length { expected, found } => {
                write!(f, "schedule has {found} trials, expected {expected}")
            }
            Violation::BurnInLength { expected, found } => {
                write!(f, "burn-in has {found} trials, expected {expected}")
            }
            Violation::PhaseOrder { round } => write!(f, "round {round} has the wrong phase"),
            Violation::RoundNumbering { index, round } => {
                write!(f, "trial #{index} is numbered {round}")
            }
            Violation::PromptNotInPair { round } => {
                write!(f, "round {round} prompts a meaning that is not displayed")
            }
            Violation::PairCount { pair, expected, found } => {
                write!(f, "pair {pair} shown {found} times, expected {expected}")
            }
            Violation::UnexpectedPair { pair } => write!(f, "pair {pair} is not in the table"),
            Violation::CoDisplays { meaning, expected, found } => {
                write!(f, "meaning {meaning} displayed {found} times, expected {expected}")
            }
            Violation::BurnInSplit { pair, total, burn_in } => write!(
                f,
                "pair {pair} has {burn_in} of {total} occurrences in the burn-in"
            ),
            Violation::PromptBalance { meaning, prompts } => write!(
                f,
                "meaning {meaning} prompted {prompts} times, outside \
                 [{MIN_PROMPTS_PER_MEANING}, {MAX_PROMPTS_PER_MEANING}]"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-derives every schedule invariant by counting.
pub fn validate_schedule(s: &TrialSchedule, table: &PairFrequencyTable) -> ValidationReport {
    let mut v = Vec::new();
    if s.trials.len() != ROUNDS {
        v.push(Violation::Length {
            expected: ROUNDS,
            found: s.trials.len(),
        });
    }
    let burn_total = s.trials.iter().filter(|t| t.phase == Phase::BurnIn).count();
    if burn_total != BURN_IN_LENGTH {
        v.push(Violation::BurnInLength {
            expected: BURN_IN_LENGTH,
            found: burn_total,
        });
    }
    for (i, t) in s.trials.iter().enumerate() {
        if t.round as usize != i + 1 {
            v.push(Violation::RoundNumbering { index: i, round: t.round });
        }
        let expected = if i < BURN_IN_LENGTH { Phase::BurnIn } else { Phase::Main };
        if t.phase != expected {
            v.push(Violation::PhaseOrder { round: t.round });
        }
        if !t.pair.contains(&t.prompt) {
            v.push(Violation::PromptNotInPair { round: t.round });
        }
    }

    let mut seen: BTreeMap<&MeaningPair, (u32, u32)> = BTreeMap::new();
    for t in &s.trials {
        let e = seen.entry(&t.pair).or_default();
        e.0 += 1;
        if t.phase == Phase::BurnIn {
            e.1 += 1;
        }
    }
    for (pair, &expected) in &table.counts {
        let (found, burn) = seen.get(pair).copied().unwrap_or_default();
        if found != expected {
            v.push(Violation::PairCount {
                pair: pair.clone(),
                expected,
                found,
            });
        }
        if burn != found / 3 && burn != found.div_ceil(3) {
            v.push(Violation::BurnInSplit {
                pair: pair.clone(),
                total: found,
                burn_in: burn,
            });
        }
    }
    for pair in seen.keys() {
        if !table.counts.contains_key(*pair) {
            v.push(Violation::UnexpectedPair { pair: (*pair).clone() });
        }
    }

    for m in table.meanings() {
        let found = s.trials.iter().filter(|t| t.pair.contains(&m)).count() as u32;
        if found != CO_DISPLAYS_PER_MEANING {
            v.push(Violation::CoDisplays {
                meaning: m.clone(),
                expected: CO_DISPLAYS_PER_MEANING,
                found,
            });
        }
        let prompts = s.trials.iter().filter(|t| t.prompt == m).count() as u32;
        if !(MIN_PROMPTS_PER_MEANING..=MAX_PROMPTS_PER_MEANING).contains(&prompts) {
            v.push(Violation::PromptBalance { meaning: m, prompts });
        }
    }
    ValidationReport { violations: v }
}
