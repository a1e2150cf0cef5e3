use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{damerau_levenshtein, LexiconError, MeaningSpace, WordList, MAX_ATTEMPTS, MIN_FORM_DISTANCE};
use crate::types::Signal;

pub const CONSONANTS: [char; 11] = ['q', 'w', 't', 'p', 's', 'f', 'h', 'n', 'm', 'r', 'l'];
pub const VOWELS: [char; 5] = ['a', 'e', 'o', 'u', 'i'];

/// The artificial words available to players in one game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalSet {
    pub signals: Vec<Signal>,
    pub consonant_inventory: String,
    pub vowel_inventory: String,
}

impl SignalSet {
    pub fn new(signals: Vec<Signal>) -> SignalSet {
        SignalSet {
            signals,
            consonant_inventory: CONSONANTS.iter().collect(),
            vowel_inventory: VOWELS.iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn contains(&self, s: &Signal) -> bool {
        self.signals.contains(s)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Signal> {
        self.signals.iter()
    }
}

fn is_cvcv(s: &str) -> bool {
    let b: Vec<char> = s.chars().collect();
    b.len() == 4
        && CONSONANTS.contains(&b[0])
        && VOWELS.contains(&b[1])
        && CONSONANTS.contains(&b[2])
        && VOWELS.contains(&b[3])
}

/// Re-checks every signal-set invariant against its meaning space.
pub fn validate_signal_set(
    set: &SignalSet,
    space: &MeaningSpace,
    wordlist: Option<&WordList>,
) -> Vec<String> {
    let mut errs = Vec::new();
    if set.len() != 7 && set.len() != 10 {
        errs.push(format!("expected 7 or 10 signals, found {}", set.len()));
    }
    if set.consonant_inventory != CONSONANTS.iter().collect::<String>()
        || set.vowel_inventory != VOWELS.iter().collect::<String>()
    {
        errs.push("non-standard phoneme inventory".to_string());
    }
    let meanings = space.meanings();
    let initials: BTreeSet<char> = meanings.iter().filter_map(|m| m.initial()).collect();
    for (i, s) in set.signals.iter().enumerate() {
        let w = s.as_str();
        if !is_cvcv(w) {
            errs.push(format!("signal `{w}` is not a CV-CV word from the inventory"));
        }
        if w.chars().next().is_some_and(|c| initials.contains(&c)) {
            errs.push(format!("signal `{w}` shares a first letter with a meaning"));
        }
        if wordlist.is_some_and(|wl| wl.contains(w)) {
            errs.push(format!("signal `{w}` is an English word"));
        }
        for m in &meanings {
            if damerau_levenshtein(w, m.as_str()) < MIN_FORM_DISTANCE {
                errs.push(format!("signal `{w}` is too close to meaning `{m}`"));
            }
        }
        for o in &set.signals[i + 1..] {
            if damerau_levenshtein(w, o.as_str()) < MIN_FORM_DISTANCE {
                errs.push(format!("signals `{w}` and `{o}` are too close"));
            }
        }
    }
    errs
}

/// Draws `n` signals (7 or 10) for the meaning space, deterministically from
/// `seed`.
pub fn generate_signal_set(
    space: &MeaningSpace,
    n: usize,
    wordlist: &WordList,
    seed: u64,
) -> Result<SignalSet, LexiconError> {
    if n != 7 && n != 10 {
        return Err(LexiconError::Invalid(format!(
            "signal set size must be 7 or 10, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meanings = space.meanings();
    let initials: BTreeSet<char> = meanings.iter().filter_map(|m| m.initial()).collect();
    let onsets: Vec<char> = CONSONANTS
        .iter()
        .copied()
        .filter(|c| !initials.contains(c))
        .collect();
    if onsets.is_empty() {
        return Err(LexiconError::Exhausted(
            "every consonant is a meaning initial".to_string(),
        ));
    }

    let mut chosen: Vec<String> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let cand: String = [
                *onsets.choose(&mut rng).expect("non-empty"),
                *VOWELS.choose(&mut rng).expect("non-empty"),
                *CONSONANTS.choose(&mut rng).expect("non-empty"),
                *VOWELS.choose(&mut rng).expect("non-empty"),
            ]
            .iter()
            .collect();
            let ok = !wordlist.contains(&cand)
                && meanings
                    .iter()
                    .all(|m| damerau_levenshtein(&cand, m.as_str()) >= MIN_FORM_DISTANCE)
                && chosen
                    .iter()
                    .all(|s| damerau_levenshtein(&cand, s) >= MIN_FORM_DISTANCE);
            if ok {
                chosen.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(LexiconError::Exhausted(format!(
                "could only place {} of {n} signals",
                chosen.len()
            )));
        }
    }
    Ok(SignalSet::new(chosen.into_iter().map(Signal::from).collect()))
}
