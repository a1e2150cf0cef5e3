//! Scored lexicon ingestion and stimulus generation.
//!
//! A [`Lexicon`] is read from a tab-separated file of word pairs carrying a
//! similarity rating, a free-association rating and an embedding cosine. From
//! it we draw a [`MeaningSpace`] (three near-synonym target pairs plus four
//! distractors) and a matching [`SignalSet`] of artificial CV-CV words.

mod bundle;
mod signals;
mod space;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::types::{Meaning, MeaningPair};

pub use bundle::{generate_stimulus, StimulusBundle};
pub use signals::{generate_signal_set, validate_signal_set, SignalSet, CONSONANTS, VOWELS};
pub use space::{sample_meaning_space, validate_meaning_space, MeaningSpace};

/// Minimum edit distance between any two forms in one game.
pub const MIN_FORM_DISTANCE: usize = 3;
/// Rejection-sampling budget per sampled element.
pub const MAX_ATTEMPTS: usize = 10_000;

pub const MIN_MEANING_LEN: usize = 3;
pub const MAX_MEANING_LEN: usize = 7;

pub const TARGET_MIN_SIMILARITY: f64 = 8.0;
pub const TARGET_MAX_ASSOCIATION: f64 = 1.0;
/// Distractors may not exceed this cosine with any other distractor or target.
pub const DISTRACTOR_MAX_COSINE: f64 = 0.2;

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");
const BUNDLED_WORDLIST: &str = include_str!("../../data/english_words.txt");

const HEADER: [&str; 5] = ["word1", "word2", "similarity", "association", "cosine"];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {field} value {value} outside [{min}, {max}]")]
    Range {
        line: usize,
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("could not satisfy stimulus constraints: {0}")]
    Exhausted(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Edit distance allowing insertion, deletion, substitution and transposition
/// of adjacent characters (unrestricted Damerau-Levenshtein, a true metric).
pub fn damerau_levenshtein(a: &str, b: &str) -> usize {
    strsim::damerau_levenshtein(a, b)
}

/// Two forms are confusable if they are too close in edit distance or one
/// contains the other.
pub fn forms_conflict(a: &str, b: &str) -> bool {
    a.contains(b) || b.contains(a) || damerau_levenshtein(a, b) < MIN_FORM_DISTANCE
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub similarity: f64,
    pub association: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    words: BTreeSet<String>,
    pair_scores: BTreeMap<(String, String), PairScore>,
    cosine: BTreeMap<(String, String), f64>,
}

fn key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

fn valid_word(w: &str) -> bool {
    (1..=20).contains(&w.len()) && w.bytes().all(|c| c.is_ascii_lowercase())
}

impl Lexicon {
    /// The curated lexicon shipped with the crate.
    pub fn bundled() -> Lexicon {
        Lexicon::parse(BUNDLED_LEXICON).expect("bundled lexicon is well-formed")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Lexicon, LexiconError> {
        Lexicon::parse(&fs::read_to_string(path)?)
    }

    /// Parses the TSV format: a `word1 word2 similarity association cosine`
    /// header, then one row per pair. Blank fields are absent; trailing fields
    /// may be omitted; a blank `word2` registers a single word.
    pub fn parse(text: &str) -> Result<Lexicon, LexiconError> {
        let mut lex = Lexicon::default();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            None => return Ok(lex),
            Some((_, header)) => {
                let cols: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
                if cols != HEADER {
                    return Err(LexiconError::Parse {
                        line: 1,
                        message: format!("expected header `{}`", HEADER.join("\\t")),
                    });
                }
            }
        }

        for (idx, raw) in lines {
            let line = idx + 1;
            let row = raw.trim_end_matches('\r');
            if row.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split('\t').map(str::trim).collect();
            if fields.len() > HEADER.len() {
                return Err(LexiconError::Parse {
                    line,
                    message: format!("expected at most 5 fields, found {}", fields.len()),
                });
            }
            let field = |i: usize| fields.get(i).copied().unwrap_or("");
            let w1 = field(0);
            let w2 = field(1);
            for w in [w1, w2].into_iter().filter(|w| !w.is_empty()) {
                if !valid_word(w) {
                    return Err(LexiconError::Parse {
                        line,
                        message: format!("`{w}` is not 1-20 lowercase ASCII letters"),
                    });
                }
            }
            if w1.is_empty() {
                return Err(LexiconError::Parse {
                    line,
                    message: "missing word1".into(),
                });
            }
            let similarity = parse_score(line, "similarity", field(2), 10.0)?;
            let association = parse_score(line, "association", field(3), 10.0)?;
            let cosine = parse_score(line, "cosine", field(4), 1.0)?;

            lex.words.insert(w1.to_string());
            if w2.is_empty() {
                if similarity.is_some() || association.is_some() || cosine.is_some() {
                    return Err(LexiconError::Parse {
                        line,
                        message: "scores given for a single word".into(),
                    });
                }
                continue;
            }
            if w1 == w2 {
                return Err(LexiconError::Parse {
                    line,
                    message: format!("pair of identical words `{w1}`"),
                });
            }
            lex.words.insert(w2.to_string());
            let k = key(w1, w2);
            match (similarity, association) {
                (Some(similarity), association) => {
                    if lex
                        .pair_scores
                        .insert(k.clone(), PairScore { similarity, association })
                        .is_some()
                    {
                        return Err(duplicate(line, w1, w2));
                    }
                }
                (None, Some(_)) => {
                    return Err(LexiconError::Parse {
                        line,
                        message: "association given without similarity".into(),
                    })
                }
                (None, None) => {}
            }
            if let Some(c) = cosine {
                if lex.cosine.insert(k, c).is_some() {
                    return Err(duplicate(line, w1, w2));
                }
            }
        }
        Ok(lex)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn pair_score(&self, a: &str, b: &str) -> Option<PairScore> {
        self.pair_scores.get(&key(a, b)).copied()
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        self.cosine.get(&key(a, b)).copied()
    }

    pub fn scored_pairs(&self) -> impl Iterator<Item = (&str, &str, PairScore)> {
        self.pair_scores
            .iter()
            .map(|((a, b), s)| (a.as_str(), b.as_str(), *s))
    }

    /// A pair of words that would make an admissible target pair: rated as
    /// near-synonyms, weakly associated, and distinct in form.
    pub fn is_eligible_pair(&self, a: &str, b: &str) -> bool {
        let Some(score) = self.pair_score(a, b) else {
            return false;
        };
        let association_ok = score
            .association
            .is_some_and(|assoc| assoc < TARGET_MAX_ASSOCIATION);
        score.similarity >= TARGET_MIN_SIMILARITY
            && association_ok
            && [a, b]
                .iter()
                .all(|w| (MIN_MEANING_LEN..=MAX_MEANING_LEN).contains(&w.len()))
            && !forms_conflict(a, b)
            && a.as_bytes()[0] != b.as_bytes()[0]
    }
}

fn duplicate(line: usize, a: &str, b: &str) -> LexiconError {
    LexiconError::Parse {
        line,
        message: format!("duplicate row for pair ({a}, {b})"),
    }
}

fn parse_score(
    line: usize,
    field: &'static str,
    raw: &str,
    max: f64,
) -> Result<Option<f64>, LexiconError> {
    if raw.is_empty() {
        return Ok(None);
    }
    let value: f64 = raw.parse().map_err(|_| LexiconError::Parse {
        line,
        message: format!("{field} `{raw}` is not a number"),
    })?;
    if !(0.0..=max).contains(&value) {
        return Err(LexiconError::Range {
            line,
            field,
            value,
            min: 0.0,
            max,
        });
    }
    Ok(Some(value))
}

/// Loads the lexicon TSV at `path`.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon, LexiconError> {
    Lexicon::load(path)
}

/// Every admissible target pair in the lexicon, lexicographically ordered.
pub fn eligible_target_pairs(lex: &Lexicon) -> Vec<MeaningPair> {
    // pair_scores keys are already ordered (a <= b) and sorted.
    lex.scored_pairs()
        .filter(|(a, b, _)| lex.is_eligible_pair(a, b))
        .map(|(a, b, _)| MeaningPair::new(Meaning::from(a), Meaning::from(b)))
        .collect()
}

/// Real English words that signals must avoid.
#[derive(Debug, Clone, Default)]
pub struct WordList(HashSet<String>);

impl WordList {
    pub fn bundled() -> WordList {
        WordList::parse(BUNDLED_WORDLIST)
    }

    pub fn parse(text: &str) -> WordList {
        WordList(
            text.lines()
                .map(|l| l.trim().to_ascii_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<WordList, LexiconError> {
        Ok(WordList::parse(&fs::read_to_string(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<String> for WordList {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        WordList(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "word1\tword2\tsimilarity\tassociation\tcosine\n";

    #[test]
    fn distance_examples() {
        assert_eq!(damerau_levenshtein("bag", "purse"), 5);
        assert_eq!(damerau_levenshtein("rain", "rain"), 0);
        assert_eq!(damerau_levenshtein("ab", "ba"), 1);
        assert_eq!(damerau_levenshtein("qohe", "fuwo"), 4);
    }

    #[test]
    fn parses_four_column_row() {
        let lex = Lexicon::parse(&format!("{HEAD}abdomen\tbelly\t8.1\t0.1\n")).unwrap();
        let s = lex.pair_score("belly", "abdomen").unwrap();
        assert_eq!(s.similarity, 8.1);
        assert_eq!(s.association, Some(0.1));
        assert_eq!(lex.cosine("abdomen", "belly"), None);
        assert_eq!(lex.len(), 2);
    }

    #[test]
    fn empty_file_is_empty_lexicon() {
        let lex = Lexicon::parse("").unwrap();
        assert!(lex.is_empty());
    }

    #[test]
    fn out_of_range_similarity_is_rejected() {
        let err = Lexicon::parse(&format!("{HEAD}abdomen\tbelly\t11.0\t0.1\n")).unwrap_err();
        assert!(matches!(err, LexiconError::Range { line: 2, field: "similarity", .. }));
        let err = Lexicon::parse(&format!("{HEAD}a\tb\t\t\t1.5\n")).unwrap_err();
        assert!(matches!(err, LexiconError::Range { field: "cosine", .. }));
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let err = Lexicon::parse(&format!("{HEAD}ok\tfine\t1\t1\t0.1\nBad\tword\n")).unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 3, .. }), "{err}");
        let err = Lexicon::parse(&format!("{HEAD}x\ty\tabc\n")).unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 2, .. }));
        let err = Lexicon::parse("w1\tw2\n").unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 1, .. }));
        let err = Lexicon::parse(&format!("{HEAD}a\tb\t5\nb\ta\t6\n")).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn associated_and_dissimilar_pairs_are_not_eligible() {
        let lex = Lexicon::bundled();
        assert!(!lex.is_eligible_pair("plane", "jet"));
        assert!(!lex.is_eligible_pair("arm", "leg"));
        assert!(lex.is_eligible_pair("abdomen", "belly"));
    }

    #[test]
    fn bundled_lexicon_has_enough_distractor_candidates() {
        let lex = Lexicon::bundled();
        let in_pairs: BTreeSet<String> = eligible_target_pairs(&lex)
            .iter()
            .flat_map(|p| p.members().map(|m| m.to_string()))
            .collect();
        let candidates = lex
            .words()
            .filter(|w| !in_pairs.contains(*w) && (3..=7).contains(&w.len()))
            .count();
        assert!(candidates >= 40, "{candidates}");
    }
}
