//! Shared domain vocabulary: meanings, signals, players, conditions.

use std::borrow::Borrow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// An English noun the players have to communicate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Meaning(String);

impl Meaning {
    pub fn new(word: impl Into<String>) -> Self {
        Meaning(word.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn initial(&self) -> Option<char> {
        self.0.chars().next()
    }
}

/// An artificial word from the game's signal inventory.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signal(String);

impl Signal {
    pub fn new(word: impl Into<String>) -> Self {
        Signal(word.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

macro_rules! string_newtype_impls {
    ($ty:ident) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Borrow<str> for $ty {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl AsRef<str> for $ty {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $ty {
            fn from(s: &str) -> Self {
                $ty(s.to_string())
            }
        }

        impl From<String> for $ty {
            fn from(s: String) -> Self {
                $ty(s)
            }
        }
    };
}

string_newtype_impls!(Meaning);
string_newtype_impls!(Signal);

/// Unordered pair of meanings, stored in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "(Meaning, Meaning)", into = "(Meaning, Meaning)")]
pub struct MeaningPair {
    first: Meaning,
    second: Meaning,
}

impl MeaningPair {
    /// Builds a normalized pair. Panics if both members are equal; use
    /// [`MeaningPair::try_new`] for untrusted input.
    pub fn new(a: impl Into<Meaning>, b: impl Into<Meaning>) -> Self {
        Self::try_new(a.into(), b.into()).expect("a pair needs two distinct meanings")
    }

    pub fn try_new(a: Meaning, b: Meaning) -> Result<Self, String> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(MeaningPair { first: a, second: b }),
            std::cmp::Ordering::Greater => Ok(MeaningPair { first: b, second: a }),
            std::cmp::Ordering::Equal => Err(format!("degenerate pair ({a}, {a})")),
        }
    }

    pub fn first(&self) -> &Meaning {
        &self.first
    }

    pub fn second(&self) -> &Meaning {
        &self.second
    }

    pub fn members(&self) -> [&Meaning; 2] {
        [&self.first, &self.second]
    }

    pub fn contains(&self, m: &Meaning) -> bool {
        &self.first == m || &self.second == m
    }

    /// The member that is not `m`, if `m` belongs to the pair.
    pub fn other(&self, m: &Meaning) -> Option<&Meaning> {
        if &self.first == m {
            Some(&self.second)
        } else if &self.second == m {
            Some(&self.first)
        } else {
            None
        }
    }

    /// Stable identifier such as `drizzle-rain`.
    pub fn id(&self) -> String {
        format!("{}-{}", self.first, self.second)
    }
}

impl TryFrom<(Meaning, Meaning)> for MeaningPair {
    type Error = String;

    fn try_from((a, b): (Meaning, Meaning)) -> Result<Self, Self::Error> {
        MeaningPair::try_new(a, b)
    }
}

impl From<MeaningPair> for (Meaning, Meaning) {
    fn from(p: MeaningPair) -> Self {
        (p.first, p.second)
    }
}

impl fmt::Display for MeaningPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.first, self.second)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Player {
    A,
    B,
}

impl Player {
    pub fn other(self) -> Player {
        match self {
            Player::A => Player::B,
            Player::B => Player::A,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Player::A => "A",
            Player::B => "B",
        })
    }
}

impl FromStr for Player {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(Player::A),
            "B" => Ok(Player::B),
            other => Err(format!("unknown player `{other}`")),
        }
    }
}

/// How the ten meanings of a game are organized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Three target pairs plus four unrelated distractors.
    Standard,
    /// Three target pairs plus two distractor pairs that are themselves similar.
    PairedDistractors,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Standard => "standard",
            Variant::PairedDistractors => "paired_distractors",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Variant::Standard),
            "paired_distractors" => Ok(Variant::PairedDistractors),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

/// Communicative-need condition of a game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    Target,
    WeakTarget,
    #[serde(rename = "baseline_10sig")]
    Baseline10Sig,
    #[serde(rename = "target_10sig")]
    Target10Sig,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::Baseline,
        Condition::Target,
        Condition::WeakTarget,
        Condition::Baseline10Sig,
        Condition::Target10Sig,
    ];

    /// Uniform pair frequencies (every pair three times).
    pub fn is_baseline_family(self) -> bool {
        matches!(self, Condition::Baseline | Condition::Baseline10Sig)
    }

    pub fn signal_count(self) -> usize {
        match self {
            Condition::Baseline10Sig | Condition::Target10Sig => 10,
            _ => 7,
        }
    }

    pub fn required_variant(self) -> Variant {
        match self {
            Condition::WeakTarget => Variant::PairedDistractors,
            _ => Variant::Standard,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::Target => "target",
            Condition::WeakTarget => "weak_target",
            Condition::Baseline10Sig => "baseline_10sig",
            Condition::Target10Sig => "target_10sig",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown condition `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_is_normalized_and_serializes_as_array() {
        let p = MeaningPair::new("rain", "drizzle");
        assert_eq!(p.first().as_str(), "drizzle");
        assert_eq!(p.id(), "drizzle-rain");
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"["drizzle","rain"]"#);
        let back: MeaningPair = serde_json::from_str(r#"["rain","drizzle"]"#).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<MeaningPair>(r#"["rain","rain"]"#).is_err());
    }

    #[test]
    fn condition_names_round_trip() {
        for c in Condition::ALL {
            assert_eq!(c.as_str().parse::<Condition>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
        }
    }
}
