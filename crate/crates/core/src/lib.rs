//! Core of the colexification game platform: stimuli, trial schedules, the
//! per-dyad game engine, simulated agents and the analysis pipeline.

pub mod agents;
pub mod analysis;
pub mod engine;
pub mod lexicon;
pub mod schedule;
pub mod types;

pub use types::{Condition, Meaning, MeaningPair, Player, Signal, Variant};
