//! Worst-case RSCP bound over an interval uncertainty set of importance weights.
//!
//! When only `w_i ∈ [lower_i, upper_i]` is known, the RSCP bound is maximized
//! coordinate-wise: raising the weight of an error example can only add an
//! error to the accepted set, and raising the weight of a covered example can
//! only add a success. The maximizer therefore takes the upper end on errors
//! and the lower end on covered examples.

use serde::{Deserialize, Serialize};

use crate::binom::{cp_upper_or_vacuous, ConfidenceLevel};
use crate::error::{invalid, Error, Result};
use crate::predset::{
    check_epsilon, grid_scan, outcome_to_result, CalibrationResult, GridSpec, Method,
    PiecewiseBound, ScanMode, ScoreSet, Threshold,
};
use crate::rejection::{accepts, check_b, draw_uniforms, u_rscp, RejectionInput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IWInterval {
    pub lower: f64,
    /// `+∞` serializes as `null`.
    #[serde(with = "crate::serde_inf")]
    pub upper: f64,
}

impl IWInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower >= 0.0 && lower.is_finite()) || upper.is_nan() || upper < lower {
            return Err(invalid(format!(
                "invalid importance-weight interval [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn point(w: f64) -> Result<Self> {
        Self::new(w, w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySet {
    pub intervals: Vec<IWInterval>,
    pub delta_w: ConfidenceLevel,
}

impl UncertaintySet {
    pub fn new(intervals: Vec<IWInterval>, delta_w: ConfidenceLevel) -> Self {
        Self { intervals, delta_w }
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    fn check_for(&self, scores: &ScoreSet) -> Result<()> {
        if self.intervals.len() != scores.len() {
            return Err(Error::LengthMismatch {
                what: "importance-weight intervals",
                got: self.intervals.len(),
                expected: scores.len(),
            });
        }
        Ok(())
    }

    fn check_finite(&self, b: f64) -> Result<()> {
        match self.intervals.iter().position(|iv| iv.upper.is_infinite()) {
            Some(index) => Err(Error::InfiniteUpperBound { index, b }),
            None => Ok(()),
        }
    }
}

/// `ŵ`, one corner of the uncertainty box per example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorstCaseWeights(pub Vec<f64>);

pub fn greedy_worst_case(
    scores: &ScoreSet,
    tau: Threshold,
    w: &UncertaintySet,
) -> Result<WorstCaseWeights> {
    w.check_for(scores)?;
    Ok(WorstCaseWeights(
        scores
            .scores()
            .iter()
            .zip(&w.intervals)
            .map(|(&s, iv)| if s < tau.value() { iv.upper } else { iv.lower })
            .collect(),
    ))
}

/// `max_{w ∈ W} U_RSCP(C_τ, S_m, V, w, b, δ_C)`, attained at the greedy corner.
pub fn robust_u_rscp(
    scores: &ScoreSet,
    tau: Threshold,
    w: &UncertaintySet,
    b: f64,
    uniforms: &[f64],
    delta_c: ConfidenceLevel,
) -> Result<f64> {
    w.check_for(scores)?;
    check_b(b)?;
    w.check_finite(b)?;
    let worst = greedy_worst_case(scores, tau, w)?;
    let input = RejectionInput::new(scores, &worst.0, b, uniforms)?;
    Ok(u_rscp(&input, tau, delta_c))
}

/// Accepted-set bookkeeping as examples flip from covered to error.
struct RobustBound<'a> {
    intervals: &'a [IWInterval],
    uniforms: &'a [f64],
    b: f64,
    errors: u64,
    n: u64,
}

impl<'a> RobustBound<'a> {
    fn new(intervals: &'a [IWInterval], uniforms: &'a [f64], b: f64) -> Self {
        let n = intervals
            .iter()
            .zip(uniforms)
            .filter(|(iv, &v)| accepts(v, iv.lower, b))
            .count() as u64;
        Self {
            intervals,
            uniforms,
            b,
            errors: 0,
            n,
        }
    }
}

impl PiecewiseBound for RobustBound<'_> {
    fn mark_errors(&mut self, indices: &[usize]) {
        for &i in indices {
            let iv = self.intervals[i];
            let v = self.uniforms[i];
            let before = accepts(v, iv.lower, self.b);
            let after = accepts(v, iv.upper, self.b);
            // upper ≥ lower, so acceptance can only be gained
            if after && !before {
                self.n += 1;
            }
            if after {
                self.errors += 1;
            }
        }
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

/// PS-W grid search with caller-supplied uniforms.
#[allow(clippy::too_many_arguments)]
pub fn ps_w_calibrate_with_uniforms(
    scores: &ScoreSet,
    w: &UncertaintySet,
    b: f64,
    uniforms: &[f64],
    epsilon: f64,
    delta_c: ConfidenceLevel,
    grid: &GridSpec,
    scan: ScanMode,
) -> Result<CalibrationResult> {
    check_epsilon(epsilon)?;
    grid.validate()?;
    w.check_for(scores)?;
    check_b(b)?;
    w.check_finite(b)?;
    if delta_c.value() + w.delta_w.value() >= 1.0 {
        return Err(invalid("δ_C + δ_w must be below 1"));
    }
    if uniforms.len() != scores.len() {
        return Err(Error::LengthMismatch {
            what: "uniforms",
            got: uniforms.len(),
            expected: scores.len(),
        });
    }
    let mut state = RobustBound::new(&w.intervals, uniforms, b);
    let outcome = grid_scan(scores, grid, scan, epsilon, delta_c, &mut state);
    let mut result = outcome_to_result(Method::PsW, outcome, epsilon, delta_c);
    result.b = Some(b);
    let over = w.intervals.iter().filter(|iv| iv.upper > b).count();
    if over > 0 {
        log::warn!("{over} interval upper bound(s) exceed b = {b}");
        result
            .diagnostics
            .push(crate::rejection::over_bound_diagnostic(over, b));
    }
    Ok(result)
}

/// PS-W: draws `V` once from `(seed, "rejection")` and runs the robust grid search.
///
/// The overall guarantee holds with probability `1 - δ_C - δ_w`.
#[allow(clippy::too_many_arguments)]
pub fn ps_w_calibrate(
    scores: &ScoreSet,
    w: &UncertaintySet,
    b: f64,
    epsilon: f64,
    delta_c: ConfidenceLevel,
    grid: &GridSpec,
    scan: ScanMode,
    seed: u64,
) -> Result<CalibrationResult> {
    let uniforms = draw_uniforms(seed, scores.len());
    ps_w_calibrate_with_uniforms(scores, w, b, &uniforms, epsilon, delta_c, grid, scan)
}
