use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    cost_scores, dyad_accuracy, fit_logistic, mean_cost, mean_costs_by_pair, operationalize_colex,
    signal_entropy, AnalysisError, ColexCase, MeanCost, RegressionFit, DEFAULT_MIN_CORRECT,
};
use crate::engine::DyadLog;
use crate::lexicon::StimulusBundle;
use crate::types::Condition;

/// One dyad's directory: `log.jsonl` plus the `stimulus.json` it was played with.
#[derive(Debug, Clone)]
pub struct DyadRecord {
    pub id: String,
    pub stimulus: StimulusBundle,
    pub log: DyadLog,
}

impl DyadRecord {
    pub fn condition(&self) -> Option<Condition> {
        self.log.start().map(|s| s.condition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DyadStatus {
    Complete,
    Withdrawn,
    Incomplete,
}

impl fmt::Display for DyadStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DyadStatus::Complete => "complete",
            DyadStatus::Withdrawn => "withdrawn",
            DyadStatus::Incomplete => "incomplete",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub min_correct: u32,
    /// Also extract cases from complete dyads below the accuracy threshold.
    pub include_below_threshold: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            min_correct: DEFAULT_MIN_CORRECT,
            include_below_threshold: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadSummary {
    pub dyad: String,
    pub condition: Condition,
    pub status: DyadStatus,
    pub rounds: usize,
    pub correct: Option<u32>,
    pub accuracy: Option<f64>,
    /// Contributes colexification cases.
    pub included: bool,
    pub entropy: f64,
    pub n_signals: usize,
    pub n_cases: usize,
    pub n_yes: usize,
    pub cost: Option<MeanCost>,
    pub cost_by_pair: BTreeMap<String, MeanCost>,
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    /// Every dyad, sorted by id. Withdrawn and incomplete dyads are listed
    /// but contribute nothing else.
    pub summaries: Vec<DyadSummary>,
    pub cases: Vec<ColexCase>,
    pub fit: Result<RegressionFit, String>,
}

impl AnalysisReport {
    /// Summaries of complete dyads only.
    pub fn complete(&self) -> Vec<DyadSummary> {
        self.summaries
            .iter()
            .filter(|s| s.status == DyadStatus::Complete)
            .cloned()
            .collect()
    }
}

/// Reads every subdirectory of `root` that holds a `log.jsonl`, sorted by name.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<DyadRecord>, AnalysisError> {
    let root = root.as_ref();
    let mut dirs: Vec<_> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join("log.jsonl").is_file())
        .collect();
    dirs.sort();
    let data_err = |p: &Path, m: String| AnalysisError::Data {
        path: p.display().to_string(),
        message: m,
    };
    dirs.iter()
        .map(|d| {
            let log_path = d.join("log.jsonl");
            let log = DyadLog::load(&log_path)?.map_err(|e| data_err(&log_path, e.to_string()))?;
            let stim_path = d.join("stimulus.json");
            let stimulus = StimulusBundle::from_json(&fs::read_to_string(&stim_path)?)
                .map_err(|e| data_err(&stim_path, e.to_string()))?;
            let id = log
                .start()
                .map(|s| s.dyad)
                .unwrap_or_else(|| d.file_name().unwrap_or_default().to_string_lossy().into_owned());
            Ok(DyadRecord { id, stimulus, log })
        })
        .collect()
}

fn summarize(rec: &DyadRecord, opts: &AnalysisOptions) -> (DyadSummary, Vec<ColexCase>) {
    let condition = rec.condition().unwrap_or(Condition::Baseline);
    let rounds = rec.log.rounds().len();
    let status = if rec.log.is_withdrawn() {
        DyadStatus::Withdrawn
    } else if rec.log.is_complete() {
        DyadStatus::Complete
    } else {
        DyadStatus::Incomplete
    };
    let mut s = DyadSummary {
        dyad: rec.id.clone(),
        condition,
        status,
        rounds,
        correct: None,
        accuracy: None,
        included: false,
        entropy: 0.0,
        n_signals: rec.stimulus.signal_set.len(),
        n_cases: 0,
        n_yes: 0,
        cost: None,
        cost_by_pair: BTreeMap::new(),
    };
    if status != DyadStatus::Complete {
        return (s, Vec::new());
    }
    let Ok(acc) = dyad_accuracy(&rec.log, opts.min_correct) else {
        s.status = DyadStatus::Incomplete;
        return (s, Vec::new());
    };
    s.correct = Some(acc.correct);
    s.accuracy = Some(acc.fraction);
    s.included = acc.include || opts.include_below_threshold;
    s.entropy = signal_entropy(&rec.log);
    let space = &rec.stimulus.meaning_space;
    let costs = cost_scores(&rec.log, space);
    s.cost = mean_cost(&costs);
    s.cost_by_pair = mean_costs_by_pair(&costs);
    let mut cases = operationalize_colex(&rec.log, space, condition);
    for c in &mut cases {
        c.dyad = rec.id.clone();
    }
    s.n_cases = cases.len();
    s.n_yes = cases.iter().filter(|c| c.colex_with_synonym).count();
    if !s.included {
        cases.clear();
    }
    (s, cases)
}

/// Runs every per-dyad measurement, pools the cases of included dyads and
/// fits the fixed-effects model to them.
pub fn analyze_dataset(records: &[DyadRecord], opts: &AnalysisOptions) -> AnalysisReport {
    let mut per: Vec<(DyadSummary, Vec<ColexCase>)> =
        records.par_iter().map(|r| summarize(r, opts)).collect();
    per.sort_by(|a, b| a.0.dyad.cmp(&b.0.dyad));
    let mut summaries = Vec::with_capacity(per.len());
    let mut cases = Vec::new();
    for (s, c) in per {
        summaries.push(s);
        cases.extend(c);
    }
    cases.sort_by(|a, b| (&a.dyad, a.round, a.sender).cmp(&(&b.dyad, b.round, b.sender)));
    let fit = fit_logistic(&cases).map_err(|e| e.to_string());
    AnalysisReport {
        summaries,
        cases,
        fit,
    }
}
