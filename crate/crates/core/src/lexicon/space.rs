use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    eligible_target_pairs, forms_conflict, Lexicon, LexiconError, DISTRACTOR_MAX_COSINE,
    MAX_ATTEMPTS, MAX_MEANING_LEN, MIN_MEANING_LEN,
};
use crate::types::{Meaning, MeaningPair, Variant};

/// Restarts of the whole draw when a partial selection dead-ends.
const MAX_RESTARTS: usize = 100;

/// The ten meanings of one game.
///
/// In the paired-distractor variant the distractors are stored pairwise:
/// `distractors[0..2]` and `distractors[2..4]` each form a similarity pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeaningSpace {
    pub target_pairs: Vec<MeaningPair>,
    pub distractors: Vec<Meaning>,
    pub variant: Variant,
}

impl MeaningSpace {
    /// All meanings: target pair members first, then distractors.
    pub fn meanings(&self) -> Vec<Meaning> {
        self.target_pairs
            .iter()
            .flat_map(|p| p.members().map(Clone::clone))
            .chain(self.distractors.iter().cloned())
            .collect()
    }

    pub fn contains(&self, m: &Meaning) -> bool {
        self.target_pairs.iter().any(|p| p.contains(m)) || self.distractors.contains(m)
    }

    pub fn target_pair_of(&self, m: &Meaning) -> Option<&MeaningPair> {
        self.target_pairs.iter().find(|p| p.contains(m))
    }

    /// The other member of `m`'s target pair.
    pub fn twin(&self, m: &Meaning) -> Option<&Meaning> {
        self.target_pair_of(m).and_then(|p| p.other(m))
    }

    pub fn is_target_pair(&self, pair: &MeaningPair) -> bool {
        self.target_pairs.contains(pair)
    }

    pub fn distractor_pairs(&self) -> Vec<MeaningPair> {
        match self.variant {
            Variant::Standard => Vec::new(),
            Variant::PairedDistractors => self
                .distractors
                .chunks(2)
                .filter(|c| c.len() == 2)
                .filter_map(|c| MeaningPair::try_new(c[0].clone(), c[1].clone()).ok())
                .collect(),
        }
    }

    /// All 45 unordered pairs of distinct meanings, sorted.
    pub fn all_pairs(&self) -> Vec<MeaningPair> {
        let ms: BTreeSet<Meaning> = self.meanings().into_iter().collect();
        let ms: Vec<Meaning> = ms.into_iter().collect();
        let mut out = Vec::with_capacity(ms.len() * ms.len().saturating_sub(1) / 2);
        for (i, a) in ms.iter().enumerate() {
            for b in &ms[i + 1..] {
                out.push(MeaningPair::new(a.clone(), b.clone()));
            }
        }
        out
    }
}

/// Re-checks every meaning-space invariant from scratch and returns one
/// message per violation. With a lexicon, the similarity and cosine criteria
/// are checked too.
pub fn validate_meaning_space(space: &MeaningSpace, lex: Option<&Lexicon>) -> Vec<String> {
    let mut errs = Vec::new();
    let meanings = space.meanings();
    if space.target_pairs.len() != 3 {
        errs.push(format!("expected 3 target pairs, found {}", space.target_pairs.len()));
    }
    if space.distractors.len() != 4 {
        errs.push(format!("expected 4 distractors, found {}", space.distractors.len()));
    }
    let distinct: BTreeSet<&Meaning> = meanings.iter().collect();
    if distinct.len() != meanings.len() || meanings.len() != 10 {
        errs.push(format!(
            "expected 10 distinct meanings, found {} ({} distinct)",
            meanings.len(),
            distinct.len()
        ));
    }
    for m in &meanings {
        let len = m.as_str().len();
        if !(MIN_MEANING_LEN..=MAX_MEANING_LEN).contains(&len)
            || !m.as_str().bytes().all(|b| b.is_ascii_lowercase())
        {
            errs.push(format!("meaning `{m}` is not 3-7 lowercase letters"));
        }
    }
    for (i, a) in meanings.iter().enumerate() {
        for b in &meanings[i + 1..] {
            if a != b && forms_conflict(a.as_str(), b.as_str()) {
                errs.push(format!("meanings `{a}` and `{b}` are too similar in form"));
            }
        }
    }
    for p in &space.target_pairs {
        if p.first().initial() == p.second().initial() {
            errs.push(format!("target pair {p} shares a first letter"));
        }
    }

    let distractor_pairs = space.distractor_pairs();
    if space.variant == Variant::PairedDistractors && distractor_pairs.len() != 2 {
        errs.push("paired variant needs 2 distractor pairs".to_string());
    }

    if let Some(lex) = lex {
        for p in space.target_pairs.iter().chain(distractor_pairs.iter()) {
            if !lex.is_eligible_pair(p.first().as_str(), p.second().as_str()) {
                errs.push(format!("pair {p} does not meet the target-pair criteria"));
            }
        }
        if space.variant == Variant::Standard {
            for (i, d) in space.distractors.iter().enumerate() {
                let others = space.distractors[i + 1..]
                    .iter()
                    .chain(space.target_pairs.iter().flat_map(|p| p.members()));
                for o in others {
                    if let Some(c) = lex.cosine(d.as_str(), o.as_str()) {
                        if c > DISTRACTOR_MAX_COSINE {
                            errs.push(format!("distractor `{d}` has cosine {c} with `{o}`"));
                        }
                    }
                }
            }
        }
    }
    errs
}

fn conflicts_with_any<'a>(word: &str, chosen: impl IntoIterator<Item = &'a Meaning>) -> bool {
    chosen
        .into_iter()
        .any(|m| forms_conflict(word, m.as_str()))
}

/// Draws `count` mutually compatible eligible pairs.
fn draw_pairs(
    eligible: &[MeaningPair],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<MeaningPair>, LexiconError> {
    if eligible.len() < count {
        return Err(LexiconError::Exhausted(format!(
            "need {count} eligible target pairs, lexicon has {}",
            eligible.len()
        )));
    }
    'restart: for _ in 0..MAX_RESTARTS {
        let mut chosen: Vec<MeaningPair> = Vec::with_capacity(count);
        for _ in 0..count {
            let mut placed = false;
            for _ in 0..MAX_ATTEMPTS {
                let cand = eligible.choose(rng).expect("non-empty");
                if chosen.contains(cand) {
                    continue;
                }
                let ok = cand.members().iter().all(|w| {
                    !conflicts_with_any(w.as_str(), chosen.iter().flat_map(|p| p.members()))
                });
                if ok {
                    chosen.push(cand.clone());
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'restart;
            }
        }
        return Ok(chosen);
    }
    Err(LexiconError::Exhausted(format!(
        "no set of {count} form-compatible target pairs found"
    )))
}

fn draw_distractors(
    lex: &Lexicon,
    targets: &[MeaningPair],
    excluded: &BTreeSet<String>,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Meaning>> {
    let candidates: Vec<&str> = lex
        .words()
        .filter(|w| {
            !excluded.contains(*w) && (MIN_MEANING_LEN..=MAX_MEANING_LEN).contains(&w.len())
        })
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let target_words: Vec<&Meaning> = targets.iter().flat_map(|p| p.members()).collect();
    let mut chosen: Vec<Meaning> = Vec::with_capacity(4);
    for _ in 0..4 {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let cand = *candidates.choose(rng).expect("non-empty");
            if chosen.iter().any(|m| m.as_str() == cand) {
                continue;
            }
            let form_ok = !conflicts_with_any(cand, target_words.iter().copied().chain(&chosen));
            let cosine_ok = target_words
                .iter()
                .copied()
                .chain(&chosen)
                .all(|m| lex.cosine(cand, m.as_str()).is_none_or(|c| c <= DISTRACTOR_MAX_COSINE));
            if form_ok && cosine_ok {
                chosen.push(Meaning::from(cand));
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(chosen)
}

/// Draws a meaning space from the lexicon, deterministically from `seed`.
pub fn sample_meaning_space(
    lex: &Lexicon,
    variant: Variant,
    seed: u64,
) -> Result<MeaningSpace, LexiconError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eligible = eligible_target_pairs(lex);
    match variant {
        Variant::PairedDistractors => {
            let mut pairs = draw_pairs(&eligible, 5, &mut rng)?;
            let distractor_pairs = pairs.split_off(3);
            let distractors = distractor_pairs
                .iter()
                .flat_map(|p| p.members().map(Clone::clone))
                .collect();
            Ok(MeaningSpace {
                target_pairs: pairs,
                distractors,
                variant,
            })
        }
        Variant::Standard => {
            let in_eligible: BTreeSet<String> = eligible
                .iter()
                .flat_map(|p| p.members().map(|m| m.to_string()))
                .collect();
            for _ in 0..MAX_RESTARTS {
                let targets = draw_pairs(&eligible, 3, &mut rng)?;
                if let Some(distractors) = draw_distractors(lex, &targets, &in_eligible, &mut rng) {
                    return Ok(MeaningSpace {
                        target_pairs: targets,
                        distractors,
                        variant,
                    });
                }
            }
            Err(LexiconError::Exhausted(
                "no admissible distractor set found".to_string(),
            ))
        }
    }
}
