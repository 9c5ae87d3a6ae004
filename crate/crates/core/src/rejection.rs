//! Rejection sampling from source calibration data to target samples.
//!
//! Example `i` is kept when `V_i ≤ w_i / b`. With exact weights and a valid
//! bound `b ≥ max w*`, the kept examples are i.i.d. draws from the target,
//! so the Clopper-Pearson bound on them (RSCP) controls the target error.

use rand::Rng;

use crate::binom::{cp_upper_or_vacuous, ConfidenceLevel};
use crate::error::{invalid, Error, Result};
use crate::predset::{
    check_epsilon, empirical_error_count, grid_scan, outcome_to_result, solve_exact,
    CalibrationResult, Method, PiecewiseBound, ScoreSet, SolveMode, Threshold,
};
use crate::rng::{stream_rng, STREAM_REJECTION};

#[inline]
pub(crate) fn accepts(v: f64, w: f64, b: f64) -> bool {
    v <= w / b
}

#[derive(Debug, Clone, Copy)]
pub struct RejectionInput<'a> {
    pub scores: &'a ScoreSet,
    pub weights: &'a [f64],
    pub b: f64,
    pub uniforms: &'a [f64],
}

impl<'a> RejectionInput<'a> {
    pub fn new(scores: &'a ScoreSet, weights: &'a [f64], b: f64, uniforms: &'a [f64]) -> Result<Self> {
        let m = scores.len();
        check_weights(weights, m)?;
        check_b(b)?;
        if uniforms.len() != m {
            return Err(Error::LengthMismatch {
                what: "uniforms",
                got: uniforms.len(),
                expected: m,
            });
        }
        if let Some(v) = uniforms.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("uniform draw {v} outside [0, 1]")));
        }
        Ok(Self {
            scores,
            weights,
            b,
            uniforms,
        })
    }
}

pub(crate) fn check_weights(weights: &[f64], m: usize) -> Result<()> {
    if weights.len() != m {
        return Err(Error::LengthMismatch {
            what: "importance weights",
            got: weights.len(),
            expected: m,
        });
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
        return Err(invalid(format!("importance weight {i} is {w}; weights must be finite and nonnegative")));
    }
    Ok(())
}

pub(crate) fn check_b(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("max importance weight b must be positive and finite, got {b}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptedSet {
    /// Accepted calibration indices, ascending.
    pub indices: Vec<usize>,
    /// Indices whose weight exceeds `b`; the guarantee does not hold if non-empty.
    pub over_bound: Vec<usize>,
}

impl AcceptedSet {
    pub fn n(&self) -> usize {
        self.indices.len()
    }
}

pub fn rejection_sample(input: &RejectionInput<'_>) -> AcceptedSet {
    let mut indices = Vec::new();
    let mut over_bound = Vec::new();
    for (i, (&w, &v)) in input.weights.iter().zip(input.uniforms).enumerate() {
        if w > input.b {
            over_bound.push(i);
        }
        if accepts(v, w, input.b) {
            indices.push(i);
        }
    }
    if !over_bound.is_empty() {
        log::warn!(
            "{} importance weight(s) exceed b = {}; rejection sampling no longer targets the shifted distribution",
            over_bound.len(),
            input.b
        );
    }
    AcceptedSet { indices, over_bound }
}

/// RSCP bound: `U_CP` on the accepted subsample, 1 when nothing is accepted.
pub fn u_rscp(input: &RejectionInput<'_>, tau: Threshold, delta: ConfidenceLevel) -> f64 {
    let accepted = rejection_sample(input);
    match input.scores.subset(&accepted.indices) {
        None => 1.0,
        Some(sub) => {
            let k = empirical_error_count(&sub, tau);
            cp_upper_or_vacuous(k, sub.len() as u64, delta)
        }
    }
}

/// The `V` vector of one calibration run.
pub fn draw_uniforms(seed: u64, m: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, STREAM_REJECTION);
    (0..m).map(|_| rng.random::<f64>()).collect()
}

struct AcceptedBound<'a> {
    accepted: &'a [bool],
    errors: u64,
    n: u64,
}

impl PiecewiseBound for AcceptedBound<'_> {
    fn mark_errors(&mut self, indices: &[usize]) {
        self.errors += indices.iter().filter(|&&i| self.accepted[i]).count() as u64;
    }

    fn bound(&self, delta: ConfidenceLevel) -> f64 {
        cp_upper_or_vacuous(self.errors, self.n, delta)
    }

    fn error_count(&self) -> u64 {
        self.errors
    }

    fn sample_size(&self) -> u64 {
        self.n
    }
}

pub(crate) fn over_bound_diagnostic(count: usize, b: f64) -> String {
    format!("{count} importance weight(s) exceed b = {b}; the PAC guarantee does not apply")
}

/// PS-R with caller-supplied uniforms.
pub fn ps_r_calibrate_with_uniforms(
    input: &RejectionInput<'_>,
    epsilon: f64,
    delta: ConfidenceLevel,
    mode: SolveMode,
) -> Result<CalibrationResult> {
    check_epsilon(epsilon)?;
    let scores = input.scores;
    let accepted = rejection_sample(input);
    let outcome = match mode {
        SolveMode::Exact => {
            let mut sub: Vec<f64> = accepted.indices.iter().map(|&i| scores.scores()[i]).collect();
            sub.sort_by(f64::total_cmp);
            solve_exact(&sub, scores.max_score() + 1.0, epsilon, delta)
        }
        SolveMode::Grid(grid, scan) => {
            grid.validate()?;
            let mut mask = vec![false; scores.len()];
            for &i in &accepted.indices {
                mask[i] = true;
            }
            let mut state = AcceptedBound {
                accepted: &mask,
                errors: 0,
                n: accepted.n() as u64,
            };
            grid_scan(scores, &grid, scan, epsilon, delta, &mut state)
        }
    };
    let mut result = outcome_to_result(Method::PsR, outcome, epsilon, delta);
    result.b = Some(input.b);
    if !accepted.over_bound.is_empty() {
        result
            .diagnostics
            .push(over_bound_diagnostic(accepted.over_bound.len(), input.b));
    }
    Ok(result)
}

/// PS-R: draws `V` once from `(seed, "rejection")`, then solves for τ̂.
pub fn ps_r_calibrate(
    scores: &ScoreSet,
    weights: &[f64],
    b: f64,
    epsilon: f64,
    delta: ConfidenceLevel,
    seed: u64,
    mode: SolveMode,
) -> Result<CalibrationResult> {
    let uniforms = draw_uniforms(seed, scores.len());
    let input = RejectionInput::new(scores, weights, b, &uniforms)?;
    ps_r_calibrate_with_uniforms(&input, epsilon, delta, mode)
}
