//! Exact binomial tail and Clopper-Pearson bounds.
//!
//! Every calibrator reduces to questions of the form "given `k` failures in
//! `m` Bernoulli trials, how large can the failure rate be at confidence
//! `1 - δ`?". The answer is the Clopper-Pearson upper bound
//!
//! ```text
//! θ̄(k; m, δ) = inf { θ ∈ [0, 1] : F(k; m, θ) ≤ δ } ∪ {1}
//! ```
//!
//! where `F` is the binomial CDF. `F` is evaluated through the regularized
//! incomplete beta function, never by summing the pmf.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::special::reg_inc_beta;

/// Absolute tolerance of the Clopper-Pearson root finder.
pub const CP_TOLERANCE: f64 = 1e-10;
const CP_MAX_ITER: usize = 200;

/// A tail probability `δ ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub fn new(delta: f64) -> Result<Self> {
        if delta > 0.0 && delta < 1.0 {
            Ok(Self(delta))
        } else {
            Err(invalid(format!("confidence level δ must lie in (0, 1), got {delta}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ConfidenceLevel {
    type Error = crate::Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ConfidenceLevel> for f64 {
    fn from(c: ConfidenceLevel) -> f64 {
        c.0
    }
}

/// `(k, m, θ)` for a binomial tail query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialParams {
    pub k: u64,
    pub m: u64,
    pub theta: f64,
}

impl BinomialParams {
    pub fn new(k: u64, m: u64, theta: f64) -> Result<Self> {
        check_counts(k, m)?;
        check_probability(theta)?;
        Ok(Self { k, m, theta })
    }

    pub fn cdf(&self) -> f64 {
        cdf_unchecked(self.k, self.m, self.theta)
    }
}

fn check_counts(k: u64, m: u64) -> Result<()> {
    if m == 0 {
        return Err(invalid("trial count m must be positive"));
    }
    if k > m {
        return Err(invalid(format!("success count k = {k} exceeds trial count m = {m}")));
    }
    Ok(())
}

fn check_probability(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(invalid(format!("probability must lie in [0, 1], got {theta}")))
    }
}

fn cdf_unchecked(k: u64, m: u64, theta: f64) -> f64 {
    if k >= m || theta <= 0.0 {
        return 1.0;
    }
    if theta >= 1.0 {
        return 0.0;
    }
    // F(k; m, θ) = I_{1-θ}(m - k, k + 1)
    reg_inc_beta((m - k) as f64, (k + 1) as f64, 1.0 - theta, theta)
}

/// Binomial CDF `F(k; m, θ) = P[Binom(m, θ) ≤ k]`.
pub fn binom_cdf(k: u64, m: u64, theta: f64) -> Result<f64> {
    check_counts(k, m)?;
    check_probability(theta)?;
    Ok(cdf_unchecked(k, m, theta))
}

fn cp_upper_unchecked(k: u64, m: u64, delta: f64) -> f64 {
    if k >= m {
        return 1.0;
    }
    // F(k; m, lo) > δ and F(k; m, hi) ≤ δ throughout.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..CP_MAX_ITER {
        if hi - lo <= CP_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if cdf_unchecked(k, m, mid) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Clopper-Pearson upper bound `θ̄(k; m, δ)`.
///
/// Returns the upper end of the final bisection bracket, so that
/// `F(k; m, θ̄) ≤ δ` holds at the returned value itself.
pub fn cp_upper(k: u64, m: u64, delta: ConfidenceLevel) -> Result<f64> {
    check_counts(k, m)?;
    Ok(cp_upper_unchecked(k, m, delta.value()))
}

/// Clopper-Pearson lower bound, defined through `θ_(k; m, δ) = 1 - θ̄(m - k; m, δ)`.
pub fn cp_lower(k: u64, m: u64, delta: ConfidenceLevel) -> Result<f64> {
    check_counts(k, m)?;
    if k == 0 {
        return Ok(0.0);
    }
    Ok(1.0 - cp_upper_unchecked(m - k, m, delta.value()))
}

/// Largest `k` with `F(k; m, ε) ≤ δ`, or `None` when even `k = 0` fails.
pub fn k_max(m: u64, epsilon: f64, delta: ConfidenceLevel) -> Result<Option<u64>> {
    if m == 0 {
        return Err(invalid("trial count m must be positive"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("ε must lie in (0, 1), got {epsilon}")));
    }
    let d = delta.value();
    // F is increasing in k, so the feasible set is a prefix {0, ..., k*}.
    Ok(last_true(m, |k| cdf_unchecked(k, m, epsilon) <= d))
}

/// Largest `k ∈ [0, m]` with `cp_upper(k, m, δ) ≤ ε`, or `None`.
pub(crate) fn max_count_with_bound(m: u64, epsilon: f64, delta: ConfidenceLevel) -> Option<u64> {
    let d = delta.value();
    last_true(m, |k| cp_upper_unchecked(k, m, d) <= epsilon)
}

/// Binary search for the last index in `0..=hi` where a prefix-true predicate holds.
fn last_true(hi: u64, pred: impl Fn(u64) -> bool) -> Option<u64> {
    if !pred(0) {
        return None;
    }
    let (mut lo, mut hi) = (0u64, hi);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Some(lo)
}

/// `cp_upper` for callers that already validated `k ≤ m`; `m = 0` yields the
/// vacuous bound 1.
pub(crate) fn cp_upper_or_vacuous(k: u64, m: u64, delta: ConfidenceLevel) -> f64 {
    if m == 0 {
        1.0
    } else {
        cp_upper_unchecked(k, m, delta.value())
    }
}
