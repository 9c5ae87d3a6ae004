//! Monte Carlo validation of the calibrators on the two-Gaussian shift.
//!
//! Each trial redraws the source calibration set, the unlabeled target
//! calibration set and the rejection uniforms from seeds derived from the
//! master seed; the labeled target test set is drawn once. Trials run in
//! parallel and are collected in trial order, so a run is a pure function of
//! its configuration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binom::ConfidenceLevel;
use crate::error::{invalid, Result};
use crate::iw::{DomainScores, IwEstimate};
use crate::predset::{
    ps_c_calibrate, ps_calibrate, CalibrationResult, GridSpec, Method, ScanMode, ScoreSet,
    SolveMode, Threshold,
};
use crate::rejection::ps_r_calibrate;
use crate::rng::{derive_seed, stream_rng};
use crate::robust::{ps_w_calibrate, IWInterval, UncertaintySet};
use crate::synth::{Domain, SynthExample, TwoGaussian, TwoGaussianConfig};
use crate::wsci::WsciCalibrator;

/// Where calibration importance weights come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IwMode {
    /// Exact density ratios and exact `b`.
    #[default]
    True,
    /// Weights derived from the synthetic domain classifier.
    Estimated,
}

/// Search strategy for the methods that admit an exact solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    Exact,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub epsilon: f64,
    pub delta: f64,
    /// Defaults to `δ/2`.
    pub delta_c: Option<f64>,
    /// Defaults to `δ/2`.
    pub delta_w: Option<f64>,
    pub bins: usize,
    pub smoothness: f64,
    pub grid: GridSpec,
    pub scan: ScanMode,
    pub solver: Solver,
    pub methods: Vec<Method>,
    pub iw: IwMode,
    pub synth: TwoGaussianConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            delta: 0.1,
            delta_c: None,
            delta_w: None,
            bins: 10,
            smoothness: 0.001,
            grid: GridSpec::default(),
            scan: ScanMode::Break,
            solver: Solver::Exact,
            methods: vec![Method::PsR],
            iw: IwMode::True,
            synth: TwoGaussianConfig::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn delta(&self) -> Result<ConfidenceLevel> {
        ConfidenceLevel::new(self.delta)
    }

    pub fn delta_c(&self) -> Result<ConfidenceLevel> {
        ConfidenceLevel::new(self.delta_c.unwrap_or(self.delta / 2.0))
    }

    pub fn delta_w(&self) -> Result<ConfidenceLevel> {
        ConfidenceLevel::new(self.delta_w.unwrap_or(self.delta / 2.0))
    }

    pub fn validate(&self) -> Result<()> {
        crate::predset::check_epsilon(self.epsilon)?;
        self.delta()?;
        let (dc, dw) = (self.delta_c()?, self.delta_w()?);
        if dc.value() + dw.value() >= 1.0 {
            return Err(invalid("δ_C + δ_w must be below 1"));
        }
        if self.bins == 0 {
            return Err(invalid("bin count must be at least 1"));
        }
        if !(self.smoothness >= 0.0 && self.smoothness.is_finite()) {
            return Err(invalid("smoothness E must be finite and ≥ 0"));
        }
        self.grid.validate()?;
        if self.methods.is_empty() {
            return Err(invalid("select at least one method"));
        }
        TwoGaussian::new(self.synth.clone())?;
        Ok(())
    }

    fn solve_mode(&self) -> SolveMode {
        match self.solver {
            Solver::Exact => SolveMode::Exact,
            Solver::Grid => SolveMode::Grid(self.grid, self.scan),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub tau_hat: f64,
    pub bound: Option<f64>,
    pub n_accepted: Option<u64>,
    pub feasible: bool,
    pub b: Option<f64>,
    /// Error on the fixed target test set.
    pub test_error: f64,
    /// Exact target error of `C_τ̂` when the data model allows it.
    pub true_error: Option<f64>,
    pub mean_size: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeQuantiles {
    pub q10: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub violation_rate: f64,
    pub mean_error: f64,
    pub mean_true_error: Option<f64>,
    pub mean_size: f64,
    pub size_quantiles: SizeQuantiles,
    pub mean_tau_hat: f64,
    pub feasible_rate: f64,
}

/// Outcome of one method over all trials, or of a single calibration.
///
/// For Monte Carlo runs the top-level `tau_hat`, `bound` and `n_accepted`
/// are trial means and `feasible` is true only if every trial was feasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub config: serde_json::Value,
    pub method: Method,
    pub tau_hat: f64,
    pub bound: Option<f64>,
    pub n_accepted: Option<f64>,
    pub feasible: bool,
    pub trials: Vec<TrialRecord>,
    pub aggregate: Option<Aggregate>,
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl TrialReport {
    pub fn from_trials(config: serde_json::Value, method: Method, trials: Vec<TrialRecord>) -> Result<Self> {
        if trials.is_empty() {
            return Err(crate::Error::EmptyReport);
        }
        let n = trials.len() as f64;
        let mut sizes: Vec<f64> = trials.iter().map(|t| t.mean_size).collect();
        sizes.sort_by(f64::total_cmp);
        let bounds: Vec<f64> = trials.iter().filter_map(|t| t.bound).collect();
        let accepted: Vec<f64> = trials.iter().filter_map(|t| t.n_accepted.map(|x| x as f64)).collect();
        let true_errors: Vec<f64> = trials.iter().filter_map(|t| t.true_error).collect();
        let aggregate = Aggregate {
            trials: trials.len(),
            violation_rate: trials.iter().filter(|t| t.violated).count() as f64 / n,
            mean_error: mean(trials.iter().map(|t| t.test_error)),
            mean_true_error: (true_errors.len() == trials.len()).then(|| mean(true_errors.iter().copied())),
            mean_size: mean(sizes.iter().copied()),
            size_quantiles: SizeQuantiles {
                q10: quantile(&sizes, 0.10),
                q25: quantile(&sizes, 0.25),
                q50: quantile(&sizes, 0.50),
                q75: quantile(&sizes, 0.75),
                q90: quantile(&sizes, 0.90),
            },
            mean_tau_hat: mean(trials.iter().map(|t| t.tau_hat)),
            feasible_rate: trials.iter().filter(|t| t.feasible).count() as f64 / n,
        };
        Ok(Self {
            config,
            method,
            tau_hat: aggregate.mean_tau_hat,
            bound: (!bounds.is_empty()).then(|| mean(bounds.iter().copied())),
            n_accepted: (!accepted.is_empty()).then(|| mean(accepted.iter().copied())),
            feasible: trials.iter().all(|t| t.feasible),
            trials,
            aggregate: Some(aggregate),
        })
    }

    /// Report for a single calibration run without trials.
    pub fn single(config: serde_json::Value, result: &CalibrationResult) -> Self {
        Self {
            config,
            method: result.method,
            tau_hat: result.tau_hat.value(),
            bound: Some(result.bound_at_tau),
            n_accepted: Some(result.n_accepted as f64),
            feasible: result.feasible,
            trials: Vec::new(),
            aggregate: None,
        }
    }
}

/// Fixed target test set with sorted scores for fast evaluation.
struct TestSet {
    examples: Vec<SynthExample>,
    sorted_true: Vec<f64>,
    sorted_labels: Vec<f64>,
}

impl TestSet {
    fn new(examples: Vec<SynthExample>) -> Self {
        let mut sorted_true: Vec<f64> = examples.iter().map(SynthExample::true_score).collect();
        sorted_true.sort_by(f64::total_cmp);
        let mut sorted_labels: Vec<f64> = examples.iter().flat_map(|e| e.label_scores).collect();
        sorted_labels.sort_by(f64::total_cmp);
        Self {
            examples,
            sorted_true,
            sorted_labels,
        }
    }

    fn error(&self, tau: f64) -> f64 {
        self.sorted_true.partition_point(|&s| s < tau) as f64 / self.examples.len() as f64
    }

    fn size(&self, tau: f64) -> f64 {
        let below = self.sorted_labels.partition_point(|&s| s < tau);
        (self.sorted_labels.len() - below) as f64 / self.examples.len() as f64
    }
}

/// Per-trial calibration data shared by all methods.
struct TrialData {
    scores: ScoreSet,
    source: Vec<SynthExample>,
    target: Vec<SynthExample>,
    rejection_seed: u64,
}

struct Harness<'a> {
    config: &'a RunConfig,
    model: TwoGaussian,
    test: TestSet,
}

impl Harness<'_> {
    fn trial_data(&self, seed: u64) -> Result<TrialData> {
        let c = &self.config.synth;
        let source = self.model.sample(Domain::Source, c.m, &mut stream_rng(seed, "source"));
        let target = self.model.sample(Domain::Target, c.n, &mut stream_rng(seed, "target"));
        let scores = ScoreSet::new(source.iter().map(SynthExample::true_score).collect())?;
        Ok(TrialData {
            scores,
            source,
            target,
            rejection_seed: derive_seed(seed, "calibration", 0),
        })
    }

    fn record(&self, trial: usize, seed: u64, r: &CalibrationResult) -> TrialRecord {
        let tau = r.tau_hat.value();
        let true_error = self.model.target_error(tau);
        TrialRecord {
            trial,
            seed,
            tau_hat: tau,
            bound: Some(r.bound_at_tau),
            n_accepted: Some(r.n_accepted),
            feasible: r.feasible,
            b: r.b,
            test_error: self.test.error(tau),
            true_error: Some(true_error),
            mean_size: self.test.size(tau),
            violated: true_error > self.config.epsilon,
        }
    }

    fn infeasible(&self, method: Method, b: Option<f64>, why: String) -> CalibrationResult {
        CalibrationResult {
            method,
            tau_hat: Threshold::ZERO,
            bound_at_tau: 1.0,
            error_count: 0,
            n_accepted: 0,
            feasible: false,
            epsilon: self.config.epsilon,
            delta: self.config.delta,
            b,
            trace: Vec::new(),
            diagnostics: vec![why],
        }
    }

    fn run_trial(&self, trial: usize) -> Result<Vec<(Method, TrialRecord)>> {
        let cfg = self.config;
        let seed = derive_seed(cfg.seed, "trial", trial as u64);
        let data = self.trial_data(seed)?;
        let delta = cfg.delta()?;
        let delta_c = cfg.delta_c()?;
        let delta_w = cfg.delta_w()?;
        let mode = cfg.solve_mode();
        let eps = cfg.epsilon;

        let true_w: Vec<f64> = data.source.iter().map(|e| e.true_iw).collect();
        let domain = DomainScores::new(
            &data.source.iter().map(|e| e.domain_prob).collect::<Vec<_>>(),
            &data.target.iter().map(|e| e.domain_prob).collect::<Vec<_>>(),
        )?;
        let heur_source = domain.source_iws();
        let heur_target = domain.target_iws();
        let needs_fit = cfg.iw == IwMode::Estimated || cfg.methods.contains(&Method::PsM);
        let fit = if needs_fit {
            Some(IwEstimate::fit(&heur_source, &heur_target, cfg.bins, cfg.smoothness, delta_w)?)
        } else {
            None
        };

        let mut out = Vec::with_capacity(cfg.methods.len());
        for &method in &cfg.methods {
            let result = match (method, cfg.iw) {
                (Method::Ps, _) => ps_calibrate(&data.scores, eps, delta, mode)?,
                (Method::PsC, IwMode::True) => ps_c_calibrate(&data.scores, eps, delta, self.model.b(), mode)?,
                (Method::PsC, IwMode::Estimated) => {
                    let fit = fit.as_ref().expect("fitted");
                    match fit.b_hat {
                        Some(b) => ps_c_calibrate(&data.scores, eps, delta_c, b.max(1.0), mode)?,
                        None => self.infeasible(method, None, "unbounded b̂".into()),
                    }
                }
                (Method::PsR, IwMode::True) => ps_r_calibrate(
                    &data.scores,
                    &true_w,
                    self.model.b(),
                    eps,
                    delta,
                    data.rejection_seed,
                    mode,
                )?,
                (Method::PsR, IwMode::Estimated) => {
                    // heuristic point weights with the largest observed heuristic as b
                    let b = heur_source.iter().chain(&heur_target).copied().fold(0.0, f64::max);
                    ps_r_calibrate(&data.scores, &heur_source, b, eps, delta, data.rejection_seed, mode)?
                }
                (Method::PsM, _) => {
                    let fit = fit.as_ref().expect("fitted");
                    match (fit.point_weights_for(&heur_source), fit.point_b()) {
                        (Ok(w), Ok(b)) => {
                            let mut r = ps_r_calibrate(&data.scores, &w, b, eps, delta, data.rejection_seed, mode)?;
                            r.method = Method::PsM;
                            r
                        }
                        (Err(e), _) | (_, Err(e)) => self.infeasible(method, None, e.to_string()),
                    }
                }
                (Method::PsW, IwMode::True) => {
                    let set = UncertaintySet::new(
                        true_w.iter().map(|&w| IWInterval::point(w)).collect::<Result<_>>()?,
                        delta_w,
                    );
                    ps_w_calibrate(
                        &data.scores,
                        &set,
                        self.model.b(),
                        eps,
                        delta,
                        &cfg.grid,
                        cfg.scan,
                        data.rejection_seed,
                    )?
                }
                (Method::PsW, IwMode::Estimated) => {
                    let fit = fit.as_ref().expect("fitted");
                    match fit.b_hat {
                        Some(b) => {
                            let set = UncertaintySet::new(fit.intervals_for(&heur_source), delta_w);
                            ps_w_calibrate(
                                &data.scores,
                                &set,
                                b,
                                eps,
                                delta_c,
                                &cfg.grid,
                                cfg.scan,
                                data.rejection_seed,
                            )?
                        }
                        None => self.infeasible(method, None, "unbounded b̂".into()),
                    }
                }
                (Method::Wsci, iw) => {
                    out.push((method, self.run_wsci(trial, seed, &data, iw, &heur_source)?));
                    continue;
                }
            };
            out.push((method, self.record(trial, seed, &result)));
        }
        Ok(out)
    }

    fn run_wsci(
        &self,
        trial: usize,
        seed: u64,
        data: &TrialData,
        iw: IwMode,
        heur_source: &[f64],
    ) -> Result<TrialRecord> {
        let cal_w: Vec<f64> = match iw {
            IwMode::True => data.source.iter().map(|e| e.true_iw).collect(),
            IwMode::Estimated => heur_source.to_vec(),
        };
        let cal = WsciCalibrator::new(data.scores.scores(), &cal_w, self.config.epsilon)?;
        let n = self.test.examples.len() as f64;
        let (mut errors, mut size, mut tau_sum, mut cond_err) = (0.0, 0.0, 0.0, 0.0);
        for e in &self.test.examples {
            let tw = match iw {
                IwMode::True => e.true_iw,
                IwMode::Estimated => 1.0 / e.domain_prob.clamp(crate::iw::PROB_CLAMP, 1.0 - crate::iw::PROB_CLAMP) - 1.0,
            };
            let tau = cal.threshold(tw)?.value();
            tau_sum += tau;
            if e.true_score() < tau {
                errors += 1.0;
            }
            size += e.label_scores.iter().filter(|&&s| s >= tau).count() as f64;
            // conditional miscoverage given x, averaged over the test inputs
            cond_err += e.label_scores.iter().filter(|&&s| s < tau).sum::<f64>();
        }
        let cond_err = cond_err / n;
        Ok(TrialRecord {
            trial,
            seed,
            tau_hat: tau_sum / n,
            bound: None,
            n_accepted: None,
            feasible: true,
            b: None,
            test_error: errors / n,
            true_error: None,
            mean_size: size / n,
            violated: cond_err > self.config.epsilon,
        })
    }
}

/// Runs `trials` Monte Carlo trials; one report per configured method.
pub fn mc_validate(config: &RunConfig, trials: usize) -> Result<Vec<TrialReport>> {
    if trials == 0 {
        return Err(invalid("trial count must be at least 1"));
    }
    config.validate()?;
    let model = TwoGaussian::new(config.synth.clone())?;
    let test = model.sample(
        Domain::Target,
        config.synth.test_size.max(1),
        &mut stream_rng(config.seed, "test"),
    );
    let harness = Harness {
        config,
        model,
        test: TestSet::new(test),
    };
    let per_trial: Vec<Vec<(Method, TrialRecord)>> = (0..trials)
        .into_par_iter()
        .map(|t| harness.run_trial(t))
        .collect::<Result<_>>()?;

    let echo = serde_json::to_value(config)?;
    config
        .methods
        .iter()
        .map(|&method| {
            let records = per_trial
                .iter()
                .flat_map(|rows| rows.iter().filter(|(m, _)| *m == method).map(|(_, r)| r.clone()))
                .collect();
            TrialReport::from_trials(echo.clone(), method, records)
        })
        .collect()
}
