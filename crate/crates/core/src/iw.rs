//! Importance-weight estimation by binning a heuristic weight.
//!
//! A domain classifier `g(s = 1 | x)` (source vs. target) gives a heuristic
//! weight `1/g - 1`. The heuristic is only used to group examples: bins are
//! cut at equal-mass quantiles of the source heuristic weights, and inside each
//! bin the weight is re-estimated as the ratio of target to source bin mass,
//! with Clopper-Pearson intervals on both masses at level `δ_w / (2K)`.

use serde::{Deserialize, Serialize};

use crate::binom::{cp_lower, cp_upper, ConfidenceLevel};
use crate::error::{invalid, Error, Result};
use crate::robust::IWInterval;

/// Domain probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-6;

fn clamp_prob(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("domain probability {p} outside [0, 1]")));
    }
    Ok(p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
}

/// Source-vs-target classifier outputs `g(s = 1 | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScores {
    pub source_probs: Vec<f64>,
    pub target_probs: Vec<f64>,
}

impl DomainScores {
    pub fn new(source_probs: &[f64], target_probs: &[f64]) -> Result<Self> {
        Ok(Self {
            source_probs: source_probs.iter().map(|&p| clamp_prob(p)).collect::<Result<_>>()?,
            target_probs: target_probs.iter().map(|&p| clamp_prob(p)).collect::<Result<_>>()?,
        })
    }

    pub fn source_iws(&self) -> Vec<f64> {
        self.source_probs.iter().map(|&p| 1.0 / p - 1.0).collect()
    }

    pub fn target_iws(&self) -> Vec<f64> {
        self.target_probs.iter().map(|&p| 1.0 / p - 1.0).collect()
    }
}

/// Heuristic weight `1/g(s=1|x) - 1`, with `g` clamped as in [`DomainScores`].
pub fn heuristic_iw(prob: f64) -> Result<f64> {
    Ok(1.0 / clamp_prob(prob)? - 1.0)
}

/// Bins `[edges[j], edges[j+1])` over heuristic weights, with `edges[0] = 0`
/// and `edges[K] = +∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPartition {
    #[serde(with = "crate::serde_inf::vec")]
    edges: Vec<f64>,
}

impl BinPartition {
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0.0 || *edges.last().unwrap() != f64::INFINITY {
            return Err(invalid("bin edges must start at 0 and end at +∞"));
        }
        if edges.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(invalid("bin edges must be strictly ascending"));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn k(&self) -> usize {
        self.edges.len() - 1
    }

    /// Index of the bin containing `v` (values below 0 go to bin 0).
    pub fn bin_of(&self, v: f64) -> usize {
        let interior = &self.edges[1..self.edges.len() - 1];
        interior.partition_point(|&e| e <= v)
    }

    pub fn counts(&self, values: &[f64]) -> Vec<u64> {
        let mut c = vec![0u64; self.k()];
        for &v in values {
            c[self.bin_of(v)] += 1;
        }
        c
    }
}

/// Equal-mass bins over source heuristic weights.
///
/// Cut `j` is placed after sorted position `round(j·m/K)`; when that splits a
/// run of equal values the whole run stays in the lower bin, and each interior
/// edge equals the smallest value of the bin above it. Once a run pushes a cut
/// past its scheduled position, the examples above it are split evenly over
/// the bins that remain.
pub fn build_equal_mass_bins(values: &[f64], k: usize) -> Result<BinPartition> {
    if k == 0 {
        return Err(invalid("bin count K must be at least 1"));
    }
    if values.len() < k {
        return Err(invalid(format!("{} values cannot fill {k} bins", values.len())));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(invalid(format!("heuristic weight {v} must be finite and nonnegative")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();

    // Positions p (1..m) such that sorted[p-1] < sorted[p]: legal cut points.
    let boundaries: Vec<usize> = (1..m).filter(|&p| sorted[p - 1] < sorted[p]).collect();
    let distinct = boundaries.len() + 1;
    if distinct < k {
        return Err(Error::DegenerateBins { bins: k, distinct });
    }

    let mut edges = Vec::with_capacity(k + 1);
    edges.push(0.0);
    let mut next = 0usize;
    let mut prev = 0usize;
    for j in 1..k {
        let scheduled = |j: usize| ((j * m) as f64 / k as f64).round() as usize;
        // a tie run pushed the last cut past schedule: split the rest evenly
        let target = if prev > scheduled(j - 1) {
            prev + ((m - prev) as f64 / (k - j + 1) as f64).round() as usize
        } else {
            scheduled(j)
        };
        let remaining = k - 1 - j;
        let mut idx = next + boundaries[next..].partition_point(|&p| p < target);
        idx = idx.min(boundaries.len() - 1 - remaining);
        edges.push(sorted[boundaries[idx]]);
        prev = boundaries[idx];
        next = idx + 1;
    }
    edges.push(f64::INFINITY);
    BinPartition::from_edges(edges)
}

/// Per-bin source/target counts and the settings of the interval estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEstimates {
    pub source_counts: Vec<u64>,
    pub target_counts: Vec<u64>,
    pub m: u64,
    pub n: u64,
    /// Smoothness constant `E ≥ 0`.
    pub smoothness: f64,
    pub delta_w: ConfidenceLevel,
}

impl BinEstimates {
    pub fn from_counts(
        source_counts: Vec<u64>,
        target_counts: Vec<u64>,
        smoothness: f64,
        delta_w: ConfidenceLevel,
    ) -> Result<Self> {
        if source_counts.is_empty() || source_counts.len() != target_counts.len() {
            return Err(Error::LengthMismatch {
                what: "target bin counts",
                got: target_counts.len(),
                expected: source_counts.len(),
            });
        }
        if !(smoothness >= 0.0 && smoothness.is_finite()) {
            return Err(invalid(format!("smoothness E must be finite and ≥ 0, got {smoothness}")));
        }
        let m: u64 = source_counts.iter().sum();
        let n: u64 = target_counts.iter().sum();
        if m == 0 || n == 0 {
            return Err(invalid("both source and target samples are required"));
        }
        Ok(Self {
            source_counts,
            target_counts,
            m,
            n,
            smoothness,
            delta_w,
        })
    }

    pub fn from_samples(
        bins: &BinPartition,
        source_iws: &[f64],
        target_iws: &[f64],
        smoothness: f64,
        delta_w: ConfidenceLevel,
    ) -> Result<Self> {
        Self::from_counts(bins.counts(source_iws), bins.counts(target_iws), smoothness, delta_w)
    }

    pub fn k(&self) -> usize {
        self.source_counts.len()
    }

    pub fn p_hat(&self, j: usize) -> f64 {
        self.source_counts[j] as f64 / self.m as f64
    }

    pub fn q_hat(&self, j: usize) -> f64 {
        self.target_counts[j] as f64 / self.n as f64
    }

    /// Per-interval level `δ' = δ_w / (2K)`.
    pub fn delta_prime(&self) -> ConfidenceLevel {
        ConfidenceLevel::new(self.delta_w.value() / (2.0 * self.k() as f64))
            .expect("δ_w / 2K lies in (0, 1)")
    }
}

/// How bin masses are bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProportionInterval {
    ClopperPearson,
    /// Plug-in fractions; the infinite-sample limit of the Clopper-Pearson interval.
    PointEstimate,
}

/// Per-bin importance-weight bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinIWBounds {
    pub intervals: Vec<IWInterval>,
    pub source_counts: Vec<u64>,
}

impl BinIWBounds {
    pub fn k(&self) -> usize {
        self.intervals.len()
    }
}

pub fn estimate_iw_bounds(est: &BinEstimates) -> Result<BinIWBounds> {
    estimate_iw_bounds_with(est, ProportionInterval::ClopperPearson)
}

pub fn estimate_iw_bounds_with(est: &BinEstimates, kind: ProportionInterval) -> Result<BinIWBounds> {
    let e = est.smoothness;
    let dp = est.delta_prime();
    let interval = |count: u64, total: u64| -> Result<(f64, f64)> {
        Ok(match kind {
            ProportionInterval::ClopperPearson => (cp_lower(count, total, dp)?, cp_upper(count, total, dp)?),
            ProportionInterval::PointEstimate => {
                let f = count as f64 / total as f64;
                (f, f)
            }
        })
    };
    let mut intervals = Vec::with_capacity(est.k());
    for j in 0..est.k() {
        let (p_lo, p_hi) = interval(est.source_counts[j], est.m)?;
        let (q_lo, q_hi) = interval(est.target_counts[j], est.n)?;
        let lower_den = p_hi + e;
        let lower = if lower_den > 0.0 {
            (q_lo - e).max(0.0) / lower_den
        } else {
            0.0
        };
        let upper_den = (p_lo - e).max(0.0);
        let upper = if upper_den > 0.0 {
            (q_hi + e) / upper_den
        } else {
            f64::INFINITY
        };
        intervals.push(IWInterval::new(lower, upper.max(lower))?);
    }
    Ok(BinIWBounds {
        intervals,
        source_counts: est.source_counts.clone(),
    })
}

/// `b̂ = max_j w̄_j`.
pub fn estimate_b(bounds: &BinIWBounds) -> Result<f64> {
    if bounds.intervals.is_empty() {
        return Err(invalid("no bins"));
    }
    if let Some(bin) = bounds.intervals.iter().position(|iv| iv.upper.is_infinite()) {
        let source_count = bounds.source_counts.get(bin).copied().unwrap_or(0);
        log::warn!("bin {bin} has an infinite IW upper bound (source count {source_count})");
        return Err(Error::UnboundedB { bin, source_count });
    }
    Ok(bounds
        .intervals
        .iter()
        .map(|iv| iv.upper)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Plug-in weight `q̂_j / p̂_j` of the bin containing `heuristic`.
pub fn point_iw(bins: &BinPartition, est: &BinEstimates, heuristic: f64) -> Result<f64> {
    let j = bins.bin_of(heuristic);
    if est.source_counts[j] == 0 {
        return Err(Error::EmptySourceBin { bin: j });
    }
    Ok(est.q_hat(j) / est.p_hat(j))
}

pub fn interval_iw_per_example(
    bins: &BinPartition,
    bounds: &BinIWBounds,
    heuristics: &[f64],
) -> Vec<IWInterval> {
    heuristics
        .iter()
        .map(|&h| bounds.intervals[bins.bin_of(h)])
        .collect()
}

/// Everything `estimate-iw` produces, reusable by later calibration runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwEstimate {
    pub partition: BinPartition,
    pub estimates: BinEstimates,
    pub bounds: BinIWBounds,
    /// `None` when some bin's upper bound is unbounded.
    pub b_hat: Option<f64>,
}

impl IwEstimate {
    pub fn fit(
        source_iws: &[f64],
        target_iws: &[f64],
        k: usize,
        smoothness: f64,
        delta_w: ConfidenceLevel,
    ) -> Result<Self> {
        let partition = build_equal_mass_bins(source_iws, k)?;
        let estimates = BinEstimates::from_samples(&partition, source_iws, target_iws, smoothness, delta_w)?;
        let bounds = estimate_iw_bounds(&estimates)?;
        let b_hat = estimate_b(&bounds).ok();
        Ok(Self {
            partition,
            estimates,
            bounds,
            b_hat,
        })
    }

    pub fn intervals_for(&self, heuristics: &[f64]) -> Vec<IWInterval> {
        interval_iw_per_example(&self.partition, &self.bounds, heuristics)
    }

    pub fn point_weights_for(&self, heuristics: &[f64]) -> Result<Vec<f64>> {
        heuristics
            .iter()
            .map(|&h| point_iw(&self.partition, &self.estimates, h))
            .collect()
    }

    /// Largest plug-in bin weight, the max-IW bound used with point weights.
    pub fn point_b(&self) -> Result<f64> {
        let mut b = f64::NEG_INFINITY;
        for j in 0..self.estimates.k() {
            if self.estimates.source_counts[j] == 0 {
                return Err(Error::EmptySourceBin { bin: j });
            }
            b = b.max(self.estimates.q_hat(j) / self.estimates.p_hat(j));
        }
        Ok(b)
    }
}
