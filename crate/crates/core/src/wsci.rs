//! Weighted split conformal baseline.
//!
//! Nonconformity is the negated true-label score. For a test point with
//! weight `w_t`, calibration point `i` gets mass `w_i / (Σw + w_t)` and the
//! test point puts mass `w_t / (Σw + w_t)` at `+∞`; the threshold is minus
//! the weighted `(1 - ε)`-quantile. This controls marginal coverage only and
//! carries no confidence over the calibration draw.

use crate::error::{invalid, Error, Result};
use crate::predset::{check_epsilon, Threshold};

#[derive(Debug, Clone)]
pub struct WsciCalibrator {
    /// Nonconformity scores, ascending.
    nonconformity: Vec<f64>,
    /// Prefix sums of the matching weights.
    cumulative: Vec<f64>,
    epsilon: f64,
}

impl WsciCalibrator {
    pub fn new(cal_scores: &[f64], cal_weights: &[f64], epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if cal_scores.len() != cal_weights.len() {
            return Err(Error::LengthMismatch {
                what: "calibration weights",
                got: cal_weights.len(),
                expected: cal_scores.len(),
            });
        }
        if cal_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("calibration weights must be finite and nonnegative"));
        }
        if cal_scores.iter().any(|s| !s.is_finite()) {
            return Err(invalid("calibration scores must be finite"));
        }
        let mut pairs: Vec<(f64, f64)> = cal_scores.iter().map(|&s| -s).zip(cal_weights.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut total = 0.0;
        let cumulative = pairs
            .iter()
            .map(|&(_, w)| {
                total += w;
                total
            })
            .collect();
        Ok(Self {
            nonconformity: pairs.into_iter().map(|(s, _)| s).collect(),
            cumulative,
            epsilon,
        })
    }

    fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Score threshold for a test point with importance weight `test_weight`.
    pub fn threshold(&self, test_weight: f64) -> Result<Threshold> {
        if !(test_weight.is_finite() && test_weight >= 0.0) {
            return Err(invalid(format!("test weight must be finite and nonnegative, got {test_weight}")));
        }
        let total = self.total() + test_weight;
        if total <= 0.0 {
            return Err(invalid("all importance weights are zero"));
        }
        let level = (1.0 - self.epsilon) * total;
        let idx = self.cumulative.partition_point(|&c| c < level);
        if idx >= self.nonconformity.len() {
            // quantile sits on the +∞ atom: full label set
            return Ok(Threshold::ZERO);
        }
        Threshold::new((-self.nonconformity[idx]).max(0.0))
    }
}

pub fn wsci_calibrate(
    cal_scores: &[f64],
    cal_weights: &[f64],
    test_weight: f64,
    epsilon: f64,
) -> Result<Threshold> {
    WsciCalibrator::new(cal_scores, cal_weights, epsilon)?.threshold(test_weight)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        assert_eq!(wsci_calibrate(&[0.7], &[1.0], 0.0, 0.5).unwrap().value(), 0.7);
    }

    #[test]
    fn uniform_weights_match_split_conformal() {
        // unweighted split conformal with n points: the ⌈(n+1)(1-ε)⌉-th smallest nonconformity
        let scores: Vec<f64> = (1..=19).map(|i| i as f64 / 20.0).collect();
        let eps = 0.1;
        let t = wsci_calibrate(&scores, &[2.5; 19], 2.5, eps).unwrap();
        let n = scores.len();
        let rank = ((n as f64 + 1.0) * (1.0 - eps)).ceil() as usize; // 18
        let mut nc: Vec<f64> = scores.iter().map(|s| -s).collect();
        nc.sort_by(f64::total_cmp);
        assert!((t.value() - (-nc[rank - 1])).abs() < 1e-15);
    }

    #[test]
    fn tiny_epsilon_gives_full_sets() {
        let scores = [0.3, 0.6, 0.9];
        let t = wsci_calibrate(&scores, &[1.0; 3], 1.0, 1e-9).unwrap();
        assert_eq!(t, Threshold::ZERO);
        let t = wsci_calibrate(&scores, &[1.0; 3], 0.0, 1e-9).unwrap();
        assert!(t.value() <= 0.3);
    }

    #[test]
    fn zero_weights_are_rejected() {
        assert!(wsci_calibrate(&[0.2, 0.4], &[0.0, 0.0], 0.0, 0.1).is_err());
        assert!(wsci_calibrate(&[0.2, 0.4], &[1.0], 0.0, 0.1).is_err());
        assert!(wsci_calibrate(&[0.2], &[-1.0], 0.0, 0.1).is_err());
    }

    #[test]
    fn heavier_test_weight_never_shrinks_the_set() {
        let scores: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37) % 1.0).collect();
        let w: Vec<f64> = (0..50).map(|i| 0.5 + (i % 3) as f64).collect();
        let cal = WsciCalibrator::new(&scores, &w, 0.2).unwrap();
        let mut prev = f64::INFINITY;
        for tw in [0.0, 0.5, 1.0, 5.0, 50.0] {
            let t = cal.threshold(tw).unwrap().value();
            assert!(t <= prev);
            prev = t;
        }
    }
}
