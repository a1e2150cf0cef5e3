use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    generate_signal_set, sample_meaning_space, validate_meaning_space, validate_signal_set,
    Lexicon, LexiconError, MeaningSpace, SignalSet, WordList,
};
use crate::types::Variant;

const MAX_REDRAWS: usize = 100;

/// Everything a game needs to know about its stimuli. Serialized as JSON,
/// this is the file handed to the scheduler, the simulator and the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusBundle {
    pub meaning_space: MeaningSpace,
    pub signal_set: SignalSet,
    pub variant: Variant,
    pub seed: u64,
}

impl StimulusBundle {
    pub fn validate(&self, lex: Option<&Lexicon>, wordlist: Option<&WordList>) -> Vec<String> {
        let mut errs = validate_meaning_space(&self.meaning_space, lex);
        errs.extend(validate_signal_set(&self.signal_set, &self.meaning_space, wordlist));
        if self.variant != self.meaning_space.variant {
            errs.push(format!(
                "bundle variant {} disagrees with meaning space variant {}",
                self.variant, self.meaning_space.variant
            ));
        }
        errs
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<StimulusBundle, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<StimulusBundle, LexiconError> {
        let text = fs::read_to_string(path)?;
        StimulusBundle::from_json(&text).map_err(|e| LexiconError::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Draws a meaning space and a signal set for it. If the drawn space leaves
/// no room for a valid signal set, a fresh space is drawn from the same seed
/// stream.
pub fn generate_stimulus(
    lex: &Lexicon,
    wordlist: &WordList,
    variant: Variant,
    n_signals: usize,
    seed: u64,
) -> Result<StimulusBundle, LexiconError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_err = None;
    for _ in 0..MAX_REDRAWS {
        let space = sample_meaning_space(lex, variant, rng.next_u64())?;
        match generate_signal_set(&space, n_signals, wordlist, rng.next_u64()) {
            Ok(signal_set) => {
                return Ok(StimulusBundle {
                    meaning_space: space,
                    signal_set,
                    variant,
                    seed,
                })
            }
            Err(e @ LexiconError::Exhausted(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| LexiconError::Exhausted("stimulus redraws".into())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_round_trips_through_json() {
        let lex = Lexicon::bundled();
        let wl = WordList::bundled();
        let b = generate_stimulus(&lex, &wl, Variant::Standard, 7, 11).unwrap();
        assert!(b.validate(Some(&lex), Some(&wl)).is_empty());
        let back = StimulusBundle::from_json(&b.to_json()).unwrap();
        assert_eq!(back, b);
        let again = generate_stimulus(&lex, &wl, Variant::Standard, 7, 11).unwrap();
        assert_eq!(again.to_json(), b.to_json());
    }

    #[test]
    fn paired_bundles_with_ten_signals() {
        let lex = Lexicon::bundled();
        let wl = WordList::bundled();
        for seed in 0..10 {
            let b = generate_stimulus(&lex, &wl, Variant::PairedDistractors, 10, seed).unwrap();
            assert!(b.validate(Some(&lex), Some(&wl)).is_empty());
        }
    }
}
