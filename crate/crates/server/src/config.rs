use std::path::{Path, PathBuf};

use colex_core::lexicon::{generate_stimulus, Lexicon, WordList};
use colex_core::Condition;
use serde::{Deserialize, Serialize};

use crate::ServerError;

pub const PORT_ENV: &str = "COLEX_PORT";
pub const ADMIN_TOKEN_ENV: &str = "COLEX_ADMIN_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub condition: Condition,
    /// Defaults to the condition's signal count.
    pub n_signals: Option<usize>,
    /// `None` uses the bundled lexicon.
    pub lexicon_path: Option<PathBuf>,
    pub wordlist_path: Option<PathBuf>,
    /// Master seed for per-dyad seeds. Unset draws one from the OS at startup.
    pub seed: Option<u64>,
    /// Seconds a player may sit on a move before being nudged.
    pub round_timeout_secs: u64,
    /// Seconds without any accepted event before a dyad is closed.
    pub dropout_timeout_secs: u64,
    /// Seconds the feedback screen stays up when players do not acknowledge it.
    pub feedback_secs: u64,
    pub bind: String,
    pub port: u16,
    pub admin_token: String,
    pub data_dir: PathBuf,
    /// Call fsync after every log append, on top of the flush.
    pub fsync: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            condition: Condition::Target,
            n_signals: None,
            lexicon_path: None,
            wordlist_path: None,
            seed: None,
            round_timeout_secs: 120,
            dropout_timeout_secs: 300,
            feedback_secs: 4,
            bind: "127.0.0.1".into(),
            port: 8080,
            admin_token: String::new(),
            data_dir: PathBuf::from("data"),
            fsync: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServerError> {
        toml::from_str(text).map_err(|e| ServerError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies `COLEX_PORT` and `COLEX_ADMIN_TOKEN`.
    pub fn with_env(self) -> Result<Self, ServerError> {
        self.with_overrides(std::env::var(PORT_ENV).ok(), std::env::var(ADMIN_TOKEN_ENV).ok())
    }

    pub fn with_overrides(mut self, port: Option<String>, admin_token: Option<String>) -> Result<Self, ServerError> {
        if let Some(p) = port {
            self.port = p
                .trim()
                .parse()
                .map_err(|_| ServerError::Config(format!("{PORT_ENV}: bad port `{p}`")))?;
        }
        if let Some(t) = admin_token {
            self.admin_token = t;
        }
        Ok(self)
    }

    pub fn n_signals(&self) -> usize {
        self.n_signals.unwrap_or_else(|| self.condition.signal_count())
    }

    /// TOML with the admin token blanked, for archives.
    pub fn snapshot(&self) -> String {
        let mut c = self.clone();
        if !c.admin_token.is_empty() {
            c.admin_token = "<redacted>".into();
        }
        toml::to_string(&c).expect("config serializes")
    }

    pub fn load_lexicon(&self) -> Result<(Lexicon, WordList), ServerError> {
        let lex = match &self.lexicon_path {
            Some(p) => Lexicon::load(p).map_err(|e| ServerError::Config(e.to_string()))?,
            None => Lexicon::bundled(),
        };
        let wl = match &self.wordlist_path {
            Some(p) => WordList::load(p).map_err(|e| ServerError::Config(e.to_string()))?,
            None => WordList::bundled(),
        };
        Ok((lex, wl))
    }

    /// Checks that games can be generated under this config.
    pub fn validate(&self, lex: &Lexicon, wl: &WordList) -> Result<(), ServerError> {
        if self.dropout_timeout_secs == 0 {
            return Err(ServerError::Config("dropout_timeout_secs must be positive".into()));
        }
        generate_stimulus(lex, wl, self.condition.required_variant(), self.n_signals(), 0)
            .map(|_| ())
            .map_err(|e| ServerError::Config(format!("cannot generate stimuli: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_overrides() {
        let c = ExperimentConfig::from_toml("condition = \"baseline_10sig\"\nport = 9000\nadmin_token = \"s\"\n").unwrap();
        assert_eq!(c.condition, Condition::Baseline10Sig);
        assert_eq!(c.n_signals(), 10);
        assert_eq!(c.round_timeout_secs, 120);
        let c = c.with_overrides(Some("9100".into()), Some("t".into())).unwrap();
        assert_eq!((c.port, c.admin_token.as_str()), (9100, "t"));
        assert!(c.clone().with_overrides(Some("x".into()), None).is_err());
        assert!(!c.snapshot().contains("\"t\""));
        assert!(ExperimentConfig::from_toml("colour = 1").is_err());
    }

    #[test]
    fn defaults_validate() {
        let c = ExperimentConfig::default();
        let (lex, wl) = c.load_lexicon().unwrap();
        c.validate(&lex, &wl).unwrap();
        let bad = ExperimentConfig {
            n_signals: Some(40),
            ..c
        };
        assert!(bad.validate(&lex, &wl).is_err());
    }
}
