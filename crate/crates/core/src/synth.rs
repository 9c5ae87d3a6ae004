//! Two-Gaussian rate shift.
//!
//! Source and target covariates are zero-mean Gaussians with diagonal
//! covariance that differ only in the first coordinate (variance 25 in the
//! source, 1 in the target; 0.1 elsewhere in both). Labels follow
//! `p(y = 1 | x) = sigmoid(5 x₁)` in both domains, and the score function is
//! that conditional itself, so everything of interest depends on `x₁` alone.
//! Coordinates `2..d` have identical marginals under both domains and cancel
//! from the density ratio; they are not materialized.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGaussianConfig {
    pub d: usize,
    pub source_var1: f64,
    pub other_var: f64,
    pub target_var1: f64,
    pub label_slope: f64,
    /// Labeled source calibration examples.
    pub m: usize,
    /// Unlabeled target calibration examples.
    pub n: usize,
    pub test_size: usize,
    pub seed: u64,
    /// Exponent `γ` of the synthetic domain classifier: the heuristic weight is
    /// `w*(x)^γ`, an over-confident but monotone stand-in for a trained classifier.
    pub heuristic_sharpness: f64,
}

impl Default for TwoGaussianConfig {
    fn default() -> Self {
        Self {
            d: 8,
            source_var1: 25.0,
            other_var: 0.1,
            target_var1: 1.0,
            label_slope: 5.0,
            m: 2000,
            n: 2000,
            test_size: 10_000,
            seed: 0,
            heuristic_sharpness: 3.0,
        }
    }
}

/// One example; `label` is drawn for unlabeled target examples too but unused there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthExample {
    pub x1: f64,
    pub label: usize,
    /// `f(x, y)` for y = 0 and y = 1.
    pub label_scores: [f64; 2],
    pub true_iw: f64,
    pub domain_prob: f64,
}

impl SynthExample {
    pub fn true_score(&self) -> f64 {
        self.label_scores[self.label]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub source: Vec<SynthExample>,
    pub target: Vec<SynthExample>,
    pub test: Vec<SynthExample>,
    /// Exact `max_x w*(x)`.
    pub b: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

#[derive(Debug, Clone)]
pub struct TwoGaussian {
    config: TwoGaussianConfig,
}

impl TwoGaussian {
    pub fn new(config: TwoGaussianConfig) -> Result<Self> {
        let c = &config;
        for (name, v) in [
            ("source_var1", c.source_var1),
            ("other_var", c.other_var),
            ("target_var1", c.target_var1),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if c.d == 0 {
            return Err(invalid("dimension d must be at least 1"));
        }
        if c.target_var1 > c.source_var1 {
            return Err(invalid("target variance above source variance gives an unbounded weight"));
        }
        if !(c.heuristic_sharpness > 0.0 && c.heuristic_sharpness.is_finite()) {
            return Err(invalid("heuristic sharpness must be positive"));
        }
        Ok(Self { config })
    }

    pub fn config(&self) -> &TwoGaussianConfig {
        &self.config
    }

    /// `w*(x) = q(x₁)/p(x₁)`.
    pub fn true_iw(&self, x1: f64) -> f64 {
        let c = &self.config;
        (c.source_var1 / c.target_var1).sqrt()
            * (-0.5 * x1 * x1 * (1.0 / c.target_var1 - 1.0 / c.source_var1)).exp()
    }

    /// Density ratio of the full `d`-dimensional Gaussians at `x`.
    pub fn density_ratio(&self, x: &[f64]) -> f64 {
        let c = &self.config;
        let log_normal = |v: f64, var: f64| -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * v * v / var;
        let mut log_ratio = 0.0;
        for (i, &v) in x.iter().enumerate() {
            let (sv, tv) = if i == 0 {
                (c.source_var1, c.target_var1)
            } else {
                (c.other_var, c.other_var)
            };
            log_ratio += log_normal(v, tv) - log_normal(v, sv);
        }
        log_ratio.exp()
    }

    /// Exact `max_x w*(x)`, attained at `x₁ = 0`.
    pub fn b(&self) -> f64 {
        self.true_iw(0.0)
    }

    pub fn heuristic_iw(&self, x1: f64) -> f64 {
        self.true_iw(x1).powf(self.config.heuristic_sharpness)
    }

    /// Synthetic domain classifier `g(s = 1 | x)`.
    pub fn domain_prob(&self, x1: f64) -> f64 {
        1.0 / (1.0 + self.heuristic_iw(x1))
    }

    pub fn p_label_one(&self, x1: f64) -> f64 {
        sigmoid(self.config.label_slope * x1)
    }

    fn example(&self, x1: f64, rng: &mut impl Rng) -> SynthExample {
        let p1 = self.p_label_one(x1);
        let label = usize::from(rng.random::<f64>() < p1);
        SynthExample {
            x1,
            label,
            label_scores: [1.0 - p1, p1],
            true_iw: self.true_iw(x1),
            domain_prob: self.domain_prob(x1),
        }
    }

    pub fn sample(&self, domain: Domain, count: usize, rng: &mut impl Rng) -> Vec<SynthExample> {
        let var = match domain {
            Domain::Source => self.config.source_var1,
            Domain::Target => self.config.target_var1,
        };
        let normal = Normal::new(0.0, var.sqrt()).expect("positive variance");
        (0..count)
            .map(|_| {
                let x1 = normal.sample(rng);
                self.example(x1, rng)
            })
            .collect()
    }

    /// Full covariate vectors, for checks on the `d`-dimensional model.
    pub fn sample_full(&self, domain: Domain, count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        let c = &self.config;
        let first = match domain {
            Domain::Source => c.source_var1,
            Domain::Target => c.target_var1,
        };
        let n1 = Normal::new(0.0, first.sqrt()).expect("positive variance");
        let rest = Normal::new(0.0, c.other_var.sqrt()).expect("positive variance");
        (0..count)
            .map(|_| {
                let mut x = Vec::with_capacity(c.d);
                x.push(n1.sample(rng));
                x.extend((1..c.d).map(|_| rest.sample(rng)));
                x
            })
            .collect()
    }

    /// Exact target error `P_Q[y ∉ C_τ(x)]`.
    pub fn target_error(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        if tau > 1.0 {
            return 1.0;
        }
        let c = &self.config;
        // y ∉ C_τ iff p(y|x) < τ; by symmetry of the target both labels
        // contribute 2 ∫_{x < a} φ(x) σ(s x) dx with a = logit(τ)/s.
        let sd = c.target_var1.sqrt();
        let upper_z = if tau >= 1.0 {
            f64::INFINITY
        } else {
            (tau / (1.0 - tau)).ln() / c.label_slope / sd
        };
        let lo = -12.0;
        let hi = upper_z.min(12.0);
        if hi <= lo {
            return 0.0;
        }
        let integrand = |z: f64| {
            (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() * sigmoid(c.label_slope * sd * z)
        };
        2.0 * simpson(integrand, lo, hi, 4000)
    }

    /// Exact expected set size `E_Q |C_τ(x)|`.
    pub fn target_size(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 2.0;
        }
        if tau >= 1.0 {
            return 0.0;
        }
        let c = &self.config;
        let a = (tau / (1.0 - tau)).ln() / c.label_slope / c.target_var1.sqrt();
        // P(x ≥ a) + P(x ≤ -a)
        2.0 * normal_cdf(-a)
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}

/// Source calibration, target calibration and target test sets from named streams of `config.seed`.
pub fn synth_two_gaussian(config: &TwoGaussianConfig) -> Result<SynthData> {
    let model = TwoGaussian::new(config.clone())?;
    let source = model.sample(Domain::Source, config.m, &mut stream_rng(config.seed, "source"));
    let target = model.sample(Domain::Target, config.n, &mut stream_rng(config.seed, "target"));
    let test = model.sample(Domain::Target, config.test_size, &mut stream_rng(config.seed, "test"));
    Ok(SynthData {
        source,
        target,
        test,
        b: model.b(),
    })
}
