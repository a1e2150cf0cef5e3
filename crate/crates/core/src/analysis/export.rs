use std::io::{Read, Write};

use super::{round_scaled, AnalysisError, ColexCase, DyadSummary};
use crate::types::{Condition, Meaning, Player};

pub const CASES_HEADER: [&str; 9] = [
    "dyad",
    "sender",
    "condition",
    "meaning",
    "pair_id",
    "round",
    "round_scaled",
    "colex",
    "colex_with_synonym",
];

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// One row per case, sorted by (dyad, round). `colex` holds the meaning the
/// signal was last used for.
pub fn write_cases_csv<W: Write>(cases: &[ColexCase], out: W) -> Result<(), AnalysisError> {
    let mut sorted: Vec<&ColexCase> = cases.iter().collect();
    sorted.sort_by(|a, b| (&a.dyad, a.round, a.sender).cmp(&(&b.dyad, b.round, b.sender)));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CASES_HEADER)?;
    for c in sorted {
        w.write_record([
            c.dyad.as_str(),
            &c.sender.to_string(),
            c.condition.as_str(),
            c.meaning.as_str(),
            &c.pair_id,
            &c.round.to_string(),
            &format!("{:.6}", round_scaled(c.round)),
            c.prior_meaning.as_str(),
            yes_no(c.colex_with_synonym),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cases_csv<R: Read>(input: R) -> Result<Vec<ColexCase>, AnalysisError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CASES_HEADER {
        return Err(AnalysisError::Data {
            path: "<cases>".into(),
            message: format!("unexpected header {header:?}"),
        });
    }
    let bad = |line: usize, message: String| AnalysisError::Data {
        path: format!("<cases> line {line}"),
        message,
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let sender: Player = rec[1].parse().map_err(|e| bad(line, format!("{e}")))?;
        let condition: Condition = rec[2].parse().map_err(|e| bad(line, format!("{e}")))?;
        let round: u32 = rec[5].parse().map_err(|e| bad(line, format!("round: {e}")))?;
        let colex_with_synonym = match &rec[8] {
            "yes" => true,
            "no" => false,
            other => return Err(bad(line, format!("expected yes/no, found `{other}`"))),
        };
        out.push(ColexCase {
            dyad: rec[0].to_string(),
            sender,
            condition,
            round,
            meaning: Meaning::from(&rec[3]),
            pair_id: rec[4].to_string(),
            prior_meaning: Meaning::from(&rec[7]),
            colex_with_synonym,
        });
    }
    Ok(out)
}

pub fn write_summaries_csv<W: Write>(summaries: &[DyadSummary], out: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dyad",
        "condition",
        "status",
        "rounds",
        "correct_post_burn_in",
        "accuracy",
        "included",
        "entropy",
        "n_cases",
        "n_colex_with_synonym",
        "n_cost_scored",
        "mean_complexity",
        "mean_ambiguity",
    ])?;
    for s in summaries {
        w.write_record([
            s.dyad.clone(),
            s.condition.to_string(),
            s.status.to_string(),
            s.rounds.to_string(),
            s.correct.map(|c| c.to_string()).unwrap_or_default(),
            opt(s.accuracy),
            yes_no(s.included).to_string(),
            format!("{:.6}", s.entropy),
            s.n_cases.to_string(),
            s.n_yes.to_string(),
            s.cost.map(|c| c.n).unwrap_or(0).to_string(),
            opt(s.cost.map(|c| c.complexity)),
            opt(s.cost.map(|c| c.ambiguity)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean complexity and ambiguity per dyad and target pair.
pub fn write_cost_scatter_csv<W: Write>(summaries: &[DyadSummary], out: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dyad", "pair_id", "mean_complexity", "mean_ambiguity", "condition", "n", "included"])?;
    for s in summaries {
        for (pair, c) in &s.cost_by_pair {
            w.write_record([
                s.dyad.clone(),
                pair.clone(),
                format!("{:.6}", c.complexity),
                format!("{:.6}", c.ambiguity),
                s.condition.to_string(),
                c.n.to_string(),
                yes_no(s.included).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_entropy_csv<W: Write>(summaries: &[DyadSummary], out: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dyad", "condition", "n_signals", "entropy", "max_entropy", "included"])?;
    for s in summaries {
        w.write_record([
            s.dyad.clone(),
            s.condition.to_string(),
            s.n_signals.to_string(),
            format!("{:.6}", s.entropy),
            format!("{:.6}", (s.n_signals as f64).ln()),
            yes_no(s.included).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::synthetic_cases;

    #[test]
    fn empty_case_list_is_header_only() {
        let mut buf = Vec::new();
        write_cases_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "dyad,sender,condition,meaning,pair_id,round,round_scaled,colex,colex_with_synonym\n"
        );
    }

    #[test]
    fn cases_round_trip_sorted() {
        let cases = synthetic_cases(&[0.0, -0.5, 1.0, -1.2], 300, 9);
        let mut buf = Vec::new();
        write_cases_csv(&cases, &mut buf).unwrap();
        let back = read_cases_csv(buf.as_slice()).unwrap();
        let mut want = cases.clone();
        want.sort_by(|a, b| (&a.dyad, a.round, a.sender).cmp(&(&b.dyad, b.round, b.sender)));
        assert_eq!(back, want);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().skip(1).all(|l| l.split(',').nth(6).unwrap().split('.').nth(1).unwrap().len() == 6));
    }
}
