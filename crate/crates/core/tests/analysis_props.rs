use colex_core::agents::{run_naming_grid, StrategyKind};
use colex_core::analysis::{
    binomial_tail, cost_closed_form, cost_scores, entropy_of, fit_logistic, mean_cost, operationalize_colex,
    signal_entropy, synthetic_cases,
};
use colex_core::lexicon::{generate_stimulus, Lexicon, WordList};
use colex_core::{Condition, Variant};
use proptest::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

/// The published row for each of the five ways three signals can coincide.
fn appendix_lookup(l_same: u8, l_syn: u8, s: u8) -> (u8, u8) {
    match (l_same == l_syn, s == l_same, s == l_syn) {
        (true, true, true) => (0, 1),   // nopo nopo nopo
        (false, true, false) => (1, 0), // nopo mumi nopo
        (true, false, false) => (1, 1), // nopo nopo mumi
        (false, false, true) => (1, 2), // nopo mumi mumi
        (false, false, false) => (2, 1), // nopo mumi fita
        _ => unreachable!("equality is transitive"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn closed_form_matches_table_and_bounds(a in 0u8..4, b in 0u8..4, c in 0u8..4) {
        let (cx, amb) = cost_closed_form(&a, &b, &c);
        prop_assert_eq!((cx, amb), appendix_lookup(a, b, c));
        prop_assert!(cx <= 2 && amb <= 2);
        prop_assert!((1..=3).contains(&(cx + amb)));
    }
}

proptest! {
    #[test]
    fn entropy_bounded_by_log_support(counts in proptest::collection::vec(1usize..20, 1..11)) {
        let items: Vec<usize> = counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c)).collect();
        let h = entropy_of(&items);
        let support = counts.len() as f64;
        prop_assert!(h <= support.ln() + 1e-12);
        let uniform = counts.iter().all(|&c| c == counts[0]);
        prop_assert_eq!((h - support.ln()).abs() < 1e-12, uniform);
    }

    #[test]
    fn binomial_tail_agrees_with_statrs(n in 1u64..200, p in 0.01f64..0.99, frac in 0.0f64..1.0) {
        let k = ((n as f64) * frac).round() as u64;
        let ours = binomial_tail(n, p, k);
        let reference = if k == 0 { 1.0 } else { Binomial::new(p, n).unwrap().sf(k - 1) };
        prop_assert!((ours - reference).abs() < 1e-9, "{} vs {}", ours, reference);
    }
}

#[test]
fn footnote_binomial() {
    let p = binomial_tail(90, 0.5, 54);
    assert!((p - 0.036).abs() <= 0.003, "{p}");
}

#[test]
fn grid_cost_endpoints() {
    let lex = Lexicon::bundled();
    let wl = WordList::bundled();
    let st7 = generate_stimulus(&lex, &wl, Variant::Standard, 7, 2).unwrap();
    let grid = run_naming_grid(&st7, Condition::Baseline, &[StrategyKind::Degenerate], 5, 1).unwrap();
    for log in &grid.logs {
        let c = mean_cost(&cost_scores(log, &st7.meaning_space)).unwrap();
        assert_eq!((c.complexity, c.ambiguity), (0.0, 1.0));
        assert_eq!(signal_entropy(log), 0.0);
    }

    let st10 = generate_stimulus(&lex, &wl, Variant::Standard, 10, 2).unwrap();
    let grid = run_naming_grid(&st10, Condition::Baseline, &[StrategyKind::FixedPerfect], 5, 1).unwrap();
    for (cell, log) in grid.manifest.cells.iter().zip(&grid.logs) {
        if cell.n_signals == 10 {
            let c = mean_cost(&cost_scores(log, &st10.meaning_space)).unwrap();
            assert_eq!((c.complexity, c.ambiguity), (1.0, 0.0));
        }
    }
}

#[test]
fn cases_are_deterministic_and_post_burn_in() {
    let st = generate_stimulus(&Lexicon::bundled(), &WordList::bundled(), Variant::Standard, 7, 5).unwrap();
    let grid = run_naming_grid(&st, Condition::Target, &[StrategyKind::Random, StrategyKind::RationalRecent], 3, 4).unwrap();
    for log in &grid.logs {
        let a = operationalize_colex(log, &st.meaning_space, Condition::Target);
        let b = operationalize_colex(log, &st.meaning_space, Condition::Target);
        assert_eq!(a, b);
        for c in &a {
            assert!(c.round > 45);
            assert_ne!(c.prior_meaning, c.meaning);
            assert_eq!(c.colex_with_synonym, st.meaning_space.twin(&c.meaning) == Some(&c.prior_meaning));
        }
    }
}

#[test]
fn irls_recovers_known_coefficients() {
    let beta = [0.0, -0.5, 1.0, -1.2];
    for seed in 0..10 {
        let fit = fit_logistic(&synthetic_cases(&beta, 5000, seed)).unwrap();
        assert!(fit.converged);
        for i in 0..4 {
            let z = (fit.coefficients[i] - beta[i]).abs() / fit.std_errors[i];
            assert!(z < 4.0, "seed {seed} coef {i}: {fit:?}");
        }
    }
}
