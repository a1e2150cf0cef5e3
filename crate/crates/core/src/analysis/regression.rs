use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnalysisError, ColexCase};
use crate::types::{Condition, Meaning, Player};

pub const MAX_IRLS_ITERATIONS: usize = 100;

/// (intercept, condition, round, condition x round) as published for the
/// first experiment.
pub const EXP1_COEFFICIENTS: [f64; 4] = [-0.22, -0.52, 1.02, -1.18];
/// The same four coefficients for the replication.
pub const EXP2_COEFFICIENTS: [f64; 4] = [-0.2, -0.44, 1.14, -0.66];

const CONVERGENCE_TOL: f64 = 1e-10;
// A log-odds coefficient this large means the likelihood has no finite
// maximum on this data.
const DIVERGENCE_BOUND: f64 = 20.0;

/// Maps rounds 1..=135 onto [-1, 1], centred on round 68.
pub fn round_scaled(round: u32) -> f64 {
    (f64::from(round) - 68.0) / 67.0
}

/// Fixed-effects logistic fit of `colex_with_synonym ~ condition * round`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub coefficients: [f64; 4],
    pub std_errors: [f64; 4],
    pub converged: bool,
    pub iterations: usize,
    pub n_cases: usize,
    /// Set when the data (quasi-)separate and no finite fit exists.
    pub separation: Option<String>,
}

fn row(condition: Condition, round: u32) -> Vector4<f64> {
    let c = if condition.is_baseline_family() { 0.0 } else { 1.0 };
    let r = round_scaled(round);
    Vector4::new(1.0, c, r, c * r)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `logistic(b0 + b1*c + b2*r + b3*c*r)` with `c` = 1 outside the baseline
/// family.
pub fn predict_prob(coefficients: &[f64; 4], condition: Condition, round_scaled: f64) -> f64 {
    let c = if condition.is_baseline_family() { 0.0 } else { 1.0 };
    let b = coefficients;
    sigmoid(b[0] + b[1] * c + b[2] * round_scaled + b[3] * c * round_scaled)
}

/// Iteratively reweighted least squares. The result does not depend on the
/// order of `cases`.
pub fn fit_logistic(cases: &[ColexCase]) -> Result<RegressionFit, AnalysisError> {
    let target = cases.iter().filter(|c| !c.condition.is_baseline_family()).count();
    let baseline = cases.len() - target;
    if baseline < 2 || target < 2 {
        return Err(AnalysisError::TooFewCases { baseline, target });
    }

    let mut data: Vec<(Vector4<f64>, f64, (bool, u32, bool))> = cases
        .iter()
        .map(|c| {
            let y = if c.colex_with_synonym { 1.0 } else { 0.0 };
            let key = (!c.condition.is_baseline_family(), c.round, c.colex_with_synonym);
            (row(c.condition, c.round), y, key)
        })
        .collect();
    data.sort_by_key(|d| d.2);

    let mut fit = RegressionFit {
        coefficients: [f64::NAN; 4],
        std_errors: [f64::NAN; 4],
        converged: false,
        iterations: 0,
        n_cases: cases.len(),
        separation: None,
    };
    let yes = data.iter().filter(|d| d.1 == 1.0).count();
    if yes == 0 || yes == data.len() {
        fit.separation = Some(format!(
            "all {} responses are `{}`",
            data.len(),
            if yes == 0 { "no" } else { "yes" }
        ));
        return Ok(fit);
    }

    let mut beta = Vector4::<f64>::zeros();
    let mut info = Matrix4::<f64>::zeros();
    for it in 1..=MAX_IRLS_ITERATIONS {
        fit.iterations = it;
        info = Matrix4::zeros();
        let mut rhs = Vector4::zeros();
        for (x, y, _) in &data {
            let eta = x.dot(&beta);
            let mu = sigmoid(eta);
            let w = (mu * (1.0 - mu)).max(1e-12);
            let z = eta + (y - mu) / w;
            info += w * x * x.transpose();
            rhs += w * z * x;
        }
        let Some(chol) = info.cholesky() else {
            fit.separation = Some("information matrix is singular".into());
            return Ok(fit);
        };
        let next = chol.solve(&rhs);
        let step = (next - beta).amax();
        beta = next;
        if beta.amax() > DIVERGENCE_BOUND {
            fit.separation = Some(format!(
                "coefficients diverge (|beta| > {DIVERGENCE_BOUND}) after {it} iterations"
            ));
            return Ok(fit);
        }
        if step < CONVERGENCE_TOL * (1.0 + beta.amax()) {
            fit.converged = true;
            break;
        }
    }
    fit.coefficients = beta.into();
    if let Some(inv) = info.try_inverse() {
        fit.std_errors = [0, 1, 2, 3].map(|i| inv[(i, i)].max(0.0).sqrt());
    }
    Ok(fit)
}

/// Draws `n` cases from the model with the given coefficients: conditions
/// alternate between baseline and target, rounds are uniform over the
/// post-burn-in part of the game.
pub fn synthetic_cases(coefficients: &[f64; 4], n: usize, seed: u64) -> Vec<ColexCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let condition = if i % 2 == 0 { Condition::Baseline } else { Condition::Target };
            let round = rng.random_range(46..=135);
            let p = predict_prob(coefficients, condition, round_scaled(round));
            ColexCase {
                dyad: format!("s{:03}", i % 100),
                sender: if i % 4 < 2 { Player::A } else { Player::B },
                condition,
                round,
                meaning: Meaning::from("rain"),
                pair_id: "drizzle-rain".into(),
                prior_meaning: Meaning::from("drizzle"),
                colex_with_synonym: rng.random_bool(p),
            }
        })
        .collect()
}
