//! Threshold prediction sets and the i.i.d. calibrators.
//!
//! A prediction set is `C_τ(x) = { y : f(x, y) ≥ τ }`. On a calibration set
//! the only thing that matters is the score of the true label: example `i`
//! is an error at `τ` exactly when `true_score[i] < τ` (ties are covered).

use serde::{Deserialize, Serialize};

use crate::binom::{cp_upper_or_vacuous, max_count_with_bound, ConfidenceLevel};
use crate::error::{invalid, Error, Result};

/// True-label scores of a calibration set, kept in original order and sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    scores: Vec<f64>,
    sorted: Vec<f64>,
    /// `perm[r]` is the original index of the `r`-th smallest score (stable).
    perm: Vec<usize>,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(invalid("score set must contain at least one score"));
        }
        if let Some((i, s)) = scores.iter().enumerate().find(|(_, s)| !s.is_finite() || **s < 0.0) {
            return Err(invalid(format!("score {i} is {s}; scores must be finite and nonnegative")));
        }
        let mut perm: Vec<usize> = (0..scores.len()).collect();
        perm.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let sorted = perm.iter().map(|&i| scores[i]).collect();
        Ok(Self { scores, sorted, perm })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Scores in original order.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn max_score(&self) -> f64 {
        *self.sorted.last().expect("non-empty")
    }

    /// Scores restricted to `indices` (original positions), in that order.
    pub fn subset(&self, indices: &[usize]) -> Option<Self> {
        if indices.is_empty() {
            return None;
        }
        Some(Self::new(indices.iter().map(|&i| self.scores[i]).collect()).expect("already validated"))
    }

    /// Runs of equal sorted scores as `(score, original indices)`.
    pub(crate) fn tie_groups(&self) -> impl Iterator<Item = (f64, &[usize])> + '_ {
        let mut start = 0;
        std::iter::from_fn(move || {
            if start >= self.sorted.len() {
                return None;
            }
            let v = self.sorted[start];
            let end = start + self.sorted[start..].partition_point(|&s| s == v);
            let group = &self.perm[start..end];
            start = end;
            Some((v, group))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Threshold(f64);

impl Threshold {
    pub const ZERO: Threshold = Threshold(0.0);

    pub fn new(tau: f64) -> Result<Self> {
        if tau >= 0.0 && tau.is_finite() {
            Ok(Self(tau))
        } else {
            Err(invalid(format!("threshold must be finite and nonnegative, got {tau}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Ascending grid `start, start + step, ...` over candidate thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub step: f64,
    pub stop_factor: f64,
    pub start: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            step: 1e-7,
            stop_factor: 1.5,
            start: 0.0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid(format!("grid step must be positive, got {}", self.step)));
        }
        if !(self.stop_factor >= 1.0 && self.stop_factor.is_finite()) {
            return Err(invalid(format!("grid stop factor must be ≥ 1, got {}", self.stop_factor)));
        }
        if !(self.start >= 0.0 && self.start.is_finite()) {
            return Err(invalid(format!("grid start must be nonnegative, got {}", self.start)));
        }
        Ok(())
    }

    fn point(&self, i: i64) -> f64 {
        self.start + i as f64 * self.step
    }

    /// Smallest grid index whose point is strictly above `u`.
    fn first_above(&self, u: f64) -> i64 {
        let mut i = ((u - self.start) / self.step).ceil().max(0.0) as i64;
        while self.point(i) <= u {
            i += 1;
        }
        while i > 0 && self.point(i - 1) > u {
            i -= 1;
        }
        i
    }

    /// Largest grid index whose point is at most `u`, or -1.
    fn last_at_most(&self, u: f64) -> i64 {
        if u < self.start {
            return -1;
        }
        let mut i = ((u - self.start) / self.step).floor() as i64;
        while self.point(i + 1) <= u {
            i += 1;
        }
        while i >= 0 && self.point(i) > u {
            i -= 1;
        }
        i
    }
}

/// What the grid search does once the bound exceeds ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMode {
    /// Stop at the first threshold whose bound exceeds ε.
    #[default]
    Break,
    /// Keep scanning until the bound exceeds `stop_factor · ε`, recording a trace.
    ScanToStop,
}

/// How a calibrator searches for τ̂.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMode {
    /// Closed-form order-statistic solution.
    Exact,
    Grid(GridSpec, ScanMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PS")]
    Ps,
    #[serde(rename = "PS-C")]
    PsC,
    #[serde(rename = "PS-R")]
    PsR,
    #[serde(rename = "PS-M")]
    PsM,
    #[serde(rename = "PS-W")]
    PsW,
    #[serde(rename = "WSCI")]
    Wsci,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Ps,
        Method::PsC,
        Method::PsR,
        Method::PsM,
        Method::PsW,
        Method::Wsci,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Ps => "PS",
            Method::PsC => "PS-C",
            Method::PsR => "PS-R",
            Method::PsM => "PS-M",
            Method::PsW => "PS-W",
            Method::Wsci => "WSCI",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub tau: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub method: Method,
    pub tau_hat: Threshold,
    /// Bound evaluated at `tau_hat` (at τ = 0 when infeasible).
    pub bound_at_tau: f64,
    /// Error count entering the bound (on the accepted subsample for rejection methods).
    pub error_count: u64,
    /// Sample size entering the bound.
    pub n_accepted: u64,
    pub feasible: bool,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TracePoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("ε must lie in (0, 1), got {epsilon}")))
    }
}

/// Number of calibration examples whose true label falls outside `C_τ`.
pub fn empirical_error_count(scores: &ScoreSet, tau: Threshold) -> u64 {
    scores.sorted.partition_point(|&s| s < tau.value()) as u64
}

/// Clopper-Pearson bound on the error of `C_τ` from the calibration set.
pub fn u_cp(scores: &ScoreSet, tau: Threshold, delta: ConfidenceLevel) -> f64 {
    let k = empirical_error_count(scores, tau);
    cp_upper_or_vacuous(k, scores.len() as u64, delta)
}

/// Incrementally maintained bound as τ sweeps upward through the scores.
pub(crate) trait PiecewiseBound {
    /// The examples at `indices` have just become errors.
    fn mark_errors(&mut self, indices: &[usize]);
    fn bound(&self, delta: ConfidenceLevel) -> f64;
    fn error_count(&self) -> u64;
    fn sample_size(&self) -> u64;
}

pub(crate) struct ScanOutcome {
    pub tau_hat: f64,
    pub bound: f64,
    pub error_count: u64,
    pub n: u64,
    pub feasible: bool,
    pub trace: Vec<TracePoint>,
}

/// Ascending grid search over `τ ∈ {start + i·step} ∩ [0, max_score + 1]`.
///
/// The bound only changes when τ passes a score, so the grid is visited one
/// score interval at a time; the outcome is identical to evaluating every
/// grid point in order.
pub(crate) fn grid_scan<B: PiecewiseBound>(
    scores: &ScoreSet,
    grid: &GridSpec,
    scan: ScanMode,
    epsilon: f64,
    delta: ConfidenceLevel,
    state: &mut B,
) -> ScanOutcome {
    let cap = scores.max_score() + 1.0;
    let last_index = grid.last_at_most(cap);
    let mut out = ScanOutcome {
        tau_hat: 0.0,
        bound: f64::NAN,
        error_count: 0,
        n: 0,
        feasible: false,
        trace: Vec::new(),
    };
    let mut first = true;
    let mut evaluate = |lo: i64, hi: i64, state: &B, out: &mut ScanOutcome| -> bool {
        let hi = hi.min(last_index);
        if lo > hi {
            return true;
        }
        let bound = state.bound(delta);
        if first {
            out.bound = bound;
            out.error_count = state.error_count();
            out.n = state.sample_size();
            first = false;
        }
        if scan == ScanMode::ScanToStop {
            out.trace.push(TracePoint {
                tau: grid.point(hi),
                bound,
            });
        }
        if bound <= epsilon {
            out.tau_hat = grid.point(hi);
            out.bound = bound;
            out.error_count = state.error_count();
            out.n = state.sample_size();
            out.feasible = true;
            true
        } else {
            match scan {
                ScanMode::Break => false,
                ScanMode::ScanToStop => bound <= grid.stop_factor * epsilon,
            }
        }
    };

    let mut groups = scores.tie_groups().peekable();
    // Piece below the smallest score: no errors.
    let first_score = scores.sorted()[0];
    if !evaluate(0, grid.last_at_most(first_score), state, &mut out) {
        return out;
    }
    while let Some((value, indices)) = groups.next() {
        state.mark_errors(indices);
        let lo = grid.first_above(value);
        let hi = match groups.peek() {
            Some(&(next, _)) => grid.last_at_most(next),
            None => last_index,
        };
        if lo > last_index {
            break;
        }
        if !evaluate(lo, hi, state, &mut out) {
            break;
        }
    }
    if out.bound.is_nan() {
        // no grid point at all
        out.bound = 1.0;
    }
    out
}

/// Error count of the full calibration set, for PS / PS-C.
struct FullSampleBound {
    errors: u64,
    m: u64,
}

impl PiecewiseBound for FullSampleBound {
    fn mark_errors(&mut self, indices: &[usize]) {
        self.errors += indices.len() as u64;
    }

    fn bound(&self, delta: ConfidenceLevel) -> f64 {
        cp_upper_or_vacuous(self.errors, self.m, delta)
    }

    fn error_count(&self) -> u64 {
        self.errors
    }

    fn sample_size(&self) -> u64 {
        self.m
    }
}

/// Order-statistic solution on an ascending list of scores.
///
/// `cap` is the threshold returned when every τ is feasible.
pub(crate) fn solve_exact(
    sorted: &[f64],
    cap: f64,
    epsilon: f64,
    delta: ConfidenceLevel,
) -> ScanOutcome {
    let n = sorted.len() as u64;
    let kstar = if n == 0 {
        None
    } else {
        max_count_with_bound(n, epsilon, delta)
    };
    match kstar {
        None => {
            let errors = sorted.partition_point(|&s| s < 0.0) as u64;
            ScanOutcome {
                tau_hat: 0.0,
                bound: cp_upper_or_vacuous(errors, n, delta),
                error_count: errors,
                n,
                feasible: false,
                trace: Vec::new(),
            }
        }
        Some(k) => {
            let tau = if k >= n { cap } else { sorted[k as usize] };
            let errors = sorted.partition_point(|&s| s < tau) as u64;
            ScanOutcome {
                tau_hat: tau,
                bound: cp_upper_or_vacuous(errors, n, delta),
                error_count: errors,
                n,
                feasible: true,
                trace: Vec::new(),
            }
        }
    }
}

pub(crate) fn outcome_to_result(
    method: Method,
    outcome: ScanOutcome,
    epsilon: f64,
    delta: ConfidenceLevel,
) -> CalibrationResult {
    CalibrationResult {
        method,
        tau_hat: Threshold(if outcome.feasible { outcome.tau_hat } else { 0.0 }),
        bound_at_tau: outcome.bound,
        error_count: outcome.error_count,
        n_accepted: outcome.n,
        feasible: outcome.feasible,
        epsilon,
        delta: delta.value(),
        b: None,
        trace: outcome.trace,
        diagnostics: Vec::new(),
    }
}

fn ps_outcome(
    scores: &ScoreSet,
    epsilon: f64,
    delta: ConfidenceLevel,
    mode: SolveMode,
) -> Result<ScanOutcome> {
    check_epsilon(epsilon)?;
    Ok(match mode {
        SolveMode::Exact => solve_exact(scores.sorted(), scores.max_score() + 1.0, epsilon, delta),
        SolveMode::Grid(grid, scan) => {
            grid.validate()?;
            let mut state = FullSampleBound {
                errors: 0,
                m: scores.len() as u64,
            };
            grid_scan(scores, &grid, scan, epsilon, delta, &mut state)
        }
    })
}

/// PS: the largest τ with `U_CP(C_τ) ≤ ε` under i.i.d. calibration data.
pub fn ps_calibrate(
    scores: &ScoreSet,
    epsilon: f64,
    delta: ConfidenceLevel,
    mode: SolveMode,
) -> Result<CalibrationResult> {
    let outcome = ps_outcome(scores, epsilon, delta, mode)?;
    Ok(outcome_to_result(Method::Ps, outcome, epsilon, delta))
}

/// PS-C: PS at the tightened level `ε / b`, valid when `b ≥ max w*`.
pub fn ps_c_calibrate(
    scores: &ScoreSet,
    epsilon: f64,
    delta: ConfidenceLevel,
    b: f64,
    mode: SolveMode,
) -> Result<CalibrationResult> {
    check_epsilon(epsilon)?;
    if !(b >= 1.0 && b.is_finite()) {
        return Err(invalid(format!("max importance weight b must be finite and ≥ 1, got {b}")));
    }
    let outcome = ps_outcome(scores, epsilon / b, delta, mode)?;
    let mut result = outcome_to_result(Method::PsC, outcome, epsilon, delta);
    result.b = Some(b);
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub error_rate: f64,
    pub mean_size: f64,
}

/// Test error and mean set size of `C_τ`.
///
/// `label_counts[i]` is the number of labels of example `i` scoring at least τ.
pub fn evaluate(true_scores: &[f64], label_counts: &[usize], tau: Threshold) -> Result<Evaluation> {
    if true_scores.is_empty() {
        return Err(invalid("evaluation needs at least one test example"));
    }
    if true_scores.len() != label_counts.len() {
        return Err(Error::LengthMismatch {
            what: "label counts",
            got: label_counts.len(),
            expected: true_scores.len(),
        });
    }
    let n = true_scores.len() as f64;
    let errors = true_scores.iter().filter(|&&s| s < tau.value()).count() as f64;
    let size: usize = label_counts.iter().sum();
    Ok(Evaluation {
        error_rate: errors / n,
        mean_size: size as f64 / n,
    })
}

/// Scores of every label for one test example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub true_label: usize,
    pub scores: Vec<f64>,
}

impl LabelScores {
    pub fn true_score(&self) -> f64 {
        self.scores[self.true_label]
    }

    pub fn set_size(&self, tau: Threshold) -> usize {
        self.scores.iter().filter(|&&s| s >= tau.value()).count()
    }
}

/// [`evaluate`] from full per-label scores.
pub fn evaluate_label_scores(test: &[LabelScores], tau: Threshold) -> Result<Evaluation> {
    let true_scores: Vec<f64> = test.iter().map(LabelScores::true_score).collect();
    let counts: Vec<usize> = test.iter().map(|t| t.set_size(tau)).collect();
    evaluate(&true_scores, &counts, tau)
}
