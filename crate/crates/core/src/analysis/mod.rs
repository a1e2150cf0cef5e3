//! Measurements over finished games: accuracy and inclusion, colexification
//! cases, signal entropy, complexity/ambiguity scores and a fixed-effects
//! logistic fit.

mod dataset;
mod export;
mod regression;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{DyadLog, LoggedRound};
use crate::lexicon::MeaningSpace;
use crate::schedule::{BURN_IN_LENGTH, ROUNDS};
use crate::types::{Condition, Meaning, Player, Signal};

pub use dataset::{analyze_dataset, load_dataset, AnalysisOptions, AnalysisReport, DyadRecord, DyadSummary, DyadStatus};
pub use export::{
    read_cases_csv, write_cases_csv, write_cost_scatter_csv, write_entropy_csv, write_summaries_csv,
    CASES_HEADER,
};
pub use regression::{
    fit_logistic, predict_prob, round_scaled, synthetic_cases, RegressionFit, EXP1_COEFFICIENTS,
    EXP2_COEFFICIENTS, MAX_IRLS_ITERATIONS,
};

/// Correct post-burn-in guesses a dyad needs to be included.
pub const DEFAULT_MIN_CORRECT: u32 = 54;

const MAIN_ROUNDS: u32 = (ROUNDS - BURN_IN_LENGTH) as u32;

fn is_main(round: u32) -> bool {
    round > BURN_IN_LENGTH as u32
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("log is incomplete: {0} of {ROUNDS} rounds")]
    Incomplete(usize),
    #[error("need at least 2 cases per condition, have {baseline} baseline and {target} target")]
    TooFewCases { baseline: usize, target: usize },
    #[error("{path}: {message}")]
    Data { path: String, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: u32,
    pub fraction: f64,
    pub include: bool,
}

/// Accuracy over the post-burn-in rounds and whether it clears `min_correct`.
pub fn dyad_accuracy(log: &DyadLog, min_correct: u32) -> Result<Accuracy, AnalysisError> {
    let rounds = log.rounds();
    if rounds.len() != ROUNDS {
        return Err(AnalysisError::Incomplete(rounds.len()));
    }
    let correct = rounds
        .iter()
        .filter(|r| is_main(r.round) && r.correct)
        .count() as u32;
    Ok(Accuracy {
        correct,
        fraction: f64::from(correct) / f64::from(MAIN_ROUNDS),
        include: correct >= min_correct,
    })
}

/// P(X >= k) for X ~ Binomial(n, p), summed exactly term by term.
pub fn binomial_tail(n: u64, p: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n || p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let mut ln_fact = Vec::with_capacity(n as usize + 1);
    ln_fact.push(0.0f64);
    for i in 1..=n {
        ln_fact.push(ln_fact[i as usize - 1] + (i as f64).ln());
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let sum: f64 = (k..=n)
        .map(|i| {
            let ln_c = ln_fact[n as usize] - ln_fact[i as usize] - ln_fact[(n - i) as usize];
            (ln_c + i as f64 * lp + (n - i) as f64 * lq).exp()
        })
        .sum();
    sum.min(1.0)
}

/// One post-burn-in use of a signal for a target meaning, where the same
/// sender last used that signal for a different meaning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColexCase {
    pub dyad: String,
    pub sender: Player,
    pub condition: Condition,
    pub round: u32,
    pub meaning: Meaning,
    pub pair_id: String,
    pub prior_meaning: Meaning,
    pub colex_with_synonym: bool,
}

/// Extracts colexification cases from completed rounds. Burn-in rounds are
/// searched for prior uses but never yield cases themselves.
pub fn colex_cases(
    dyad: &str,
    condition: Condition,
    rounds: &[LoggedRound],
    space: &MeaningSpace,
) -> Vec<ColexCase> {
    let mut last_use: HashMap<(Player, &Signal), &Meaning> = HashMap::new();
    let mut out = Vec::new();
    for r in rounds {
        let key = (r.sender, &r.signal);
        if is_main(r.round) {
            if let (Some(pair), Some(prior)) = (space.target_pair_of(&r.prompt), last_use.get(&key)) {
                if **prior != r.prompt {
                    out.push(ColexCase {
                        dyad: dyad.to_string(),
                        sender: r.sender,
                        condition,
                        round: r.round,
                        meaning: r.prompt.clone(),
                        pair_id: pair.id(),
                        prior_meaning: (*prior).clone(),
                        colex_with_synonym: space.twin(&r.prompt) == Some(*prior),
                    });
                }
            }
        }
        last_use.insert(key, &r.prompt);
    }
    out
}

/// [`colex_cases`] for a whole log, using the dyad id it recorded.
pub fn operationalize_colex(log: &DyadLog, space: &MeaningSpace, condition: Condition) -> Vec<ColexCase> {
    let dyad = log.start().map(|s| s.dyad).unwrap_or_default();
    colex_cases(&dyad, condition, &log.rounds(), space)
}

/// Shannon entropy (nats) of post-burn-in signal use.
pub fn signal_entropy(log: &DyadLog) -> f64 {
    entropy_of(log.rounds().iter().filter(|r| is_main(r.round)).map(|r| &r.signal))
}

pub fn entropy_of<'a, T: Ord + 'a>(items: impl IntoIterator<Item = &'a T>) -> f64 {
    let mut counts: BTreeMap<&T, u64> = BTreeMap::new();
    let mut n = 0u64;
    for it in items {
        *counts.entry(it).or_insert(0) += 1;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let h: f64 = counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

/// Complexity and ambiguity of using `s` for a meaning whose last signal was
/// `l_same` and whose twin's last signal was `l_syn`.
pub fn cost_closed_form<T: PartialEq>(l_same: &T, l_syn: &T, s: &T) -> (u8, u8) {
    let distinct = 1 + u8::from(l_syn != l_same) + u8::from(s != l_same && s != l_syn);
    let ambiguity = u8::from(s != l_same) + u8::from(s == l_syn);
    (distinct - 1, ambiguity)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostScore {
    pub round: u32,
    pub meaning: Meaning,
    pub pair_id: String,
    pub complexity: u8,
    pub ambiguity: u8,
}

/// Scores every post-burn-in target-meaning utterance, treating the dyad as
/// one speaker. Utterances without an earlier reference to both the meaning
/// and its twin are skipped.
pub fn cost_scores(log: &DyadLog, space: &MeaningSpace) -> Vec<CostScore> {
    cost_scores_of(&log.rounds(), space)
}

pub fn cost_scores_of(rounds: &[LoggedRound], space: &MeaningSpace) -> Vec<CostScore> {
    let mut last: HashMap<&Meaning, &Signal> = HashMap::new();
    let mut out = Vec::new();
    for r in rounds {
        if is_main(r.round) {
            if let (Some(pair), Some(twin)) = (space.target_pair_of(&r.prompt), space.twin(&r.prompt)) {
                if let (Some(l_same), Some(l_syn)) = (last.get(&r.prompt), last.get(twin)) {
                    let (complexity, ambiguity) = cost_closed_form(*l_same, *l_syn, &r.signal);
                    out.push(CostScore {
                        round: r.round,
                        meaning: r.prompt.clone(),
                        pair_id: pair.id(),
                        complexity,
                        ambiguity,
                    });
                }
            }
        }
        last.insert(&r.prompt, &r.signal);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCost {
    pub n: usize,
    pub complexity: f64,
    pub ambiguity: f64,
}

/// Mean scores per target pair, keyed by pair id.
pub fn mean_costs_by_pair(scores: &[CostScore]) -> BTreeMap<String, MeanCost> {
    let mut acc: BTreeMap<String, (usize, u64, u64)> = BTreeMap::new();
    for s in scores {
        let e = acc.entry(s.pair_id.clone()).or_default();
        e.0 += 1;
        e.1 += u64::from(s.complexity);
        e.2 += u64::from(s.ambiguity);
    }
    acc.into_iter()
        .map(|(k, (n, c, a))| {
            (
                k,
                MeanCost {
                    n,
                    complexity: c as f64 / n as f64,
                    ambiguity: a as f64 / n as f64,
                },
            )
        })
        .collect()
}

pub fn mean_cost(scores: &[CostScore]) -> Option<MeanCost> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len();
    Some(MeanCost {
        n,
        complexity: scores.iter().map(|s| f64::from(s.complexity)).sum::<f64>() / n as f64,
        ambiguity: scores.iter().map(|s| f64::from(s.ambiguity)).sum::<f64>() / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{MeaningPair, Variant};

    fn space() -> MeaningSpace {
        MeaningSpace {
            target_pairs: vec![
                MeaningPair::new("rain", "drizzle"),
                MeaningPair::new("task", "job"),
                MeaningPair::new("bag", "purse"),
            ],
            distractors: ["style", "organ", "bull", "motor"].map(Meaning::from).to_vec(),
            variant: Variant::Standard,
        }
    }

    fn round(round: u32, sender: Player, prompt: &str, signal: &str) -> LoggedRound {
        let prompt = Meaning::from(prompt);
        LoggedRound {
            round,
            sender,
            pair: MeaningPair::new(prompt.clone(), if prompt.as_str() == "motor" { "bull" } else { "motor" }),
            guess: prompt.clone(),
            prompt,
            signal: Signal::from(signal),
            correct: true,
        }
    }

    #[test]
    fn appendix_rows() {
        let rows = [
            (("nopo", "nopo", "nopo"), (0, 1)),
            (("nopo", "mumi", "nopo"), (1, 0)),
            (("nopo", "nopo", "mumi"), (1, 1)),
            (("nopo", "mumi", "mumi"), (1, 2)),
            (("nopo", "mumi", "fita"), (2, 1)),
        ];
        for ((a, b, c), want) in rows {
            assert_eq!(cost_closed_form(&a, &b, &c), want, "{a} {b} {c}");
        }
    }

    #[test]
    fn narrative_cases() {
        let sp = space();
        let p1 = Player::A;
        let mut rounds = vec![
            round(39, p1, "rain", "pami"),
            round(40, Player::B, "style", "pami"),
            round(53, p1, "rain", "pami"),
            round(121, p1, "style", "pami"),
            round(127, p1, "rain", "pami"),
        ];
        let cases = colex_cases("d", Condition::Baseline, &rounds, &sp);
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].round, 127);
        assert_eq!(cases[0].prior_meaning.as_str(), "style");
        assert!(!cases[0].colex_with_synonym);

        rounds[3] = round(121, p1, "drizzle", "pami");
        let cases = colex_cases("d", Condition::Baseline, &rounds, &sp);
        // Round 121 is itself a case (drizzle after rain), then 127 has a twin prior.
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[1].round, 127);
        assert!(cases[1].colex_with_synonym);
    }

    #[test]
    fn burn_in_never_yields_cases() {
        let sp = space();
        let rounds = vec![round(10, Player::A, "style", "pami"), round(20, Player::A, "rain", "pami")];
        assert!(colex_cases("d", Condition::Target, &rounds, &sp).is_empty());
    }

    #[test]
    fn binomial_trivial_values() {
        assert_eq!(binomial_tail(2, 0.5, 0), 1.0);
        assert!((binomial_tail(1, 0.5, 1) - 0.5).abs() < 1e-15);
        assert!((binomial_tail(90, 0.5, 54) - 0.036).abs() < 0.003);
        assert_eq!(binomial_tail(5, 0.0, 1), 0.0);
        assert_eq!(binomial_tail(5, 1.0, 5), 1.0);
    }

    #[test]
    fn entropy_values() {
        let uniform: Vec<u32> = (0..7).cycle().take(63).collect();
        assert!((entropy_of(&uniform) - 7f64.ln()).abs() < 1e-12);
        assert_eq!(entropy_of(&[1, 1, 1]), 0.0);
        let two: Vec<u32> = (0..90).map(|i| i % 2).collect();
        assert!((entropy_of(&two) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(entropy_of::<u32>(&[]), 0.0);
    }

    #[test]
    fn cost_skips_first_references() {
        let sp = space();
        let rounds = vec![
            round(50, Player::A, "rain", "nopo"),
            round(51, Player::B, "rain", "nopo"),
            round(52, Player::A, "drizzle", "mumi"),
            round(53, Player::B, "rain", "nopo"),
        ];
        let s = cost_scores_of(&rounds, &sp);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].round, s[0].complexity, s[0].ambiguity), (53, 1, 0));
    }
}
