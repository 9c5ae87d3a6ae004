//! PAC prediction sets calibrated under covariate shift.
//!
//! A prediction set `C_τ(x) = {y : f(x, y) ≥ τ}` is calibrated so that, with
//! probability at least `1 - δ` over the calibration draw, its miscoverage on
//! the target distribution is at most `ε`. Calibration data come from a source
//! distribution; importance weights (exact, point-estimated or interval-valued)
//! bridge the shift through rejection sampling.

pub mod binom;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod iw;
pub mod predset;
pub mod rejection;
pub mod report;
pub mod rng;
pub mod robust;
mod serde_inf;
mod special;
pub mod synth;
pub mod wsci;

pub use binom::{binom_cdf, cp_lower, cp_upper, k_max, BinomialParams, ConfidenceLevel};
pub use error::{Error, Result};
pub use harness::{mc_validate, Aggregate, IwMode, RunConfig, Solver, TrialRecord, TrialReport};
pub use iw::{
    build_equal_mass_bins, estimate_b, estimate_iw_bounds, heuristic_iw, point_iw, BinEstimates,
    BinIWBounds, BinPartition, DomainScores, IwEstimate,
};
pub use predset::{
    evaluate, ps_c_calibrate, ps_calibrate, u_cp, CalibrationResult, Evaluation, GridSpec,
    LabelScores, Method, ScanMode, ScoreSet, SolveMode, Threshold,
};
pub use rejection::{ps_r_calibrate, rejection_sample, u_rscp, RejectionInput};
pub use report::{emit_report, ReportFormat};
pub use robust::{greedy_worst_case, ps_w_calibrate, robust_u_rscp, IWInterval, UncertaintySet};
pub use synth::{synth_two_gaussian, TwoGaussian, TwoGaussianConfig};
pub use wsci::{wsci_calibrate, WsciCalibrator};
