//! Independent reference computations for the integration tests.
#![allow(dead_code)]

/// `P[Binom(m, θ) ≤ k]` by direct summation of log-space terms.
pub fn binom_cdf_sum(k: u64, m: u64, theta: f64) -> f64 {
    if k >= m {
        return 1.0;
    }
    if theta <= 0.0 {
        return 1.0;
    }
    if theta >= 1.0 {
        return 0.0;
    }
    let (lt, l1t) = (theta.ln(), (-theta).ln_1p());
    let mut log_term = m as f64 * l1t;
    let mut logs = Vec::with_capacity(k as usize + 1);
    logs.push(log_term);
    for j in 0..k {
        log_term += ((m - j) as f64 / (j + 1) as f64).ln() + lt - l1t;
        logs.push(log_term);
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logs.iter().map(|l| (l - top).exp()).sum();
    (top + s.ln()).exp().min(1.0)
}

/// Smallest θ (to 1e-13) with `F(k; m, θ) ≤ δ`, by bisection on the summation oracle.
pub fn cp_upper_oracle(k: u64, m: u64, delta: f64) -> f64 {
    if k >= m {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if binom_cdf_sum(k, m, mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `max{k : F(k; m, ε) ≤ δ}` by walking k upward with the summation oracle.
pub fn k_max_oracle(m: u64, eps: f64, delta: f64) -> Option<u64> {
    let mut best = None;
    for k in 0..=m {
        if binom_cdf_sum(k, m, eps) <= delta {
            best = Some(k);
        } else {
            break;
        }
    }
    best
}

/// RSCP bound computed from scratch: accepted subsample, error count, CP bound.
pub fn rscp_oracle(scores: &[f64], w: &[f64], b: f64, v: &[f64], tau: f64, delta: f64) -> f64 {
    let mut n = 0u64;
    let mut k = 0u64;
    for i in 0..scores.len() {
        if v[i] <= w[i] / b {
            n += 1;
            if scores[i] < tau {
                k += 1;
            }
        }
    }
    if n == 0 {
        1.0
    } else {
        pacset_core::cp_upper(k, n, pacset_core::ConfidenceLevel::new(delta).unwrap()).unwrap()
    }
}
