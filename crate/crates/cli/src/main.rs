use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pacset_core::ingest::{self, TestData};
use pacset_core::iw::{heuristic_iw, IwEstimate};
use pacset_core::predset::{evaluate, evaluate_label_scores};
use pacset_core::rejection::ps_r_calibrate;
use pacset_core::report::{emit_report, ReportFormat};
use pacset_core::robust::{ps_w_calibrate, IWInterval, UncertaintySet};
use pacset_core::synth::{synth_two_gaussian, SynthExample};
use pacset_core::{
    mc_validate, ps_c_calibrate, ps_calibrate, CalibrationResult, ConfidenceLevel, Error, GridSpec,
    IwMode, Method, RunConfig, ScanMode, SolveMode, Solver, Threshold, TrialReport, TwoGaussianConfig,
    WsciCalibrator,
};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_UNBOUNDED_B: u8 = 3;
const EXIT_INPUT: u8 = 4;

#[derive(Parser)]
#[command(name = "pacset", version, about = "PAC prediction sets under covariate shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate a threshold from a calibration CSV.
    Calibrate(CalibrateArgs),
    /// Error and mean set size of a threshold on test data.
    Evaluate(EvaluateArgs),
    /// Binned importance-weight intervals from domain-classifier probabilities.
    EstimateIw(EstimateIwArgs),
    /// Write a two-Gaussian covariate-shift data set as CSV files.
    Synth(SynthArgs),
    /// Monte Carlo validation on the two-Gaussian shift.
    McValidate(McArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ps,
    PsC,
    PsR,
    PsM,
    PsW,
    Wsci,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ps => Method::Ps,
            MethodArg::PsC => Method::PsC,
            MethodArg::PsR => Method::PsR,
            MethodArg::PsM => Method::PsM,
            MethodArg::PsW => Method::PsW,
            MethodArg::Wsci => Method::Wsci,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Exact,
    Grid,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScanArg {
    Break,
    ScanToStop,
}

#[derive(Clone, Copy, ValueEnum)]
enum IwArg {
    True,
    Estimated,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Calibration share of δ for interval methods [default: δ/2].
    #[arg(long)]
    delta_c: Option<f64>,
    /// IW-estimation share of δ [default: δ/2].
    #[arg(long)]
    delta_w: Option<f64>,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long = "smoothness-e", default_value_t = 0.001)]
    smoothness_e: f64,
    #[arg(long, default_value_t = 1e-7)]
    grid_step: f64,
    #[arg(long, default_value_t = 1.5)]
    grid_stop_factor: f64,
    #[arg(long, value_enum, default_value = "break")]
    scan: ScanArg,
    #[arg(long, value_enum, default_value = "exact")]
    solver: SolverArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

impl Common {
    fn grid(&self) -> GridSpec {
        GridSpec {
            step: self.grid_step,
            stop_factor: self.grid_stop_factor,
            start: 0.0,
        }
    }

    fn scan(&self) -> ScanMode {
        match self.scan {
            ScanArg::Break => ScanMode::Break,
            ScanArg::ScanToStop => ScanMode::ScanToStop,
        }
    }

    fn solve_mode(&self) -> SolveMode {
        match self.solver {
            SolverArg::Exact => SolveMode::Exact,
            SolverArg::Grid => SolveMode::Grid(self.grid(), self.scan()),
        }
    }

    fn delta_c(&self) -> pacset_core::Result<ConfidenceLevel> {
        ConfidenceLevel::new(self.delta_c.unwrap_or(self.delta / 2.0))
    }

    fn delta_w(&self) -> pacset_core::Result<ConfidenceLevel> {
        ConfidenceLevel::new(self.delta_w.unwrap_or(self.delta / 2.0))
    }
}

#[derive(Args)]
struct CalibrateArgs {
    /// Calibration CSV.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, value_enum, default_value = "ps")]
    method: MethodArg,
    /// Unlabeled target CSV `example_id,domain_prob`, used to estimate IWs.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Known upper bound on the importance weights.
    #[arg(long)]
    b: Option<f64>,
    /// Importance weight of the test point (WSCI only).
    #[arg(long, default_value_t = 1.0)]
    test_weight: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Test CSV, long `example_id,label_id,score` or compact `example_id,true_score,n_labels_ge_tau`.
    #[arg(long)]
    test: PathBuf,
    /// Truth file `example_id,true_label_id` for the long layout.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, conflicts_with = "result", required_unless_present = "result")]
    tau: Option<f64>,
    /// JSON written by `calibrate`; its `tau_hat` is evaluated.
    #[arg(long)]
    result: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateIwArgs {
    /// Source calibration CSV with a `domain_prob` column.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory for source.csv, target.csv, test.csv and truth.csv.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    data: SynthData,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct SynthData {
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 2000)]
    m: usize,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    test_size: usize,
    /// Exponent of the synthetic domain classifier's weight distortion.
    #[arg(long, default_value_t = 3.0)]
    sharpness: f64,
}

impl SynthData {
    fn config(&self, seed: u64) -> TwoGaussianConfig {
        TwoGaussianConfig {
            d: self.dim,
            m: self.m,
            n: self.n,
            test_size: self.test_size,
            seed,
            heuristic_sharpness: self.sharpness,
            ..TwoGaussianConfig::default()
        }
    }
}

#[derive(Args)]
struct McArgs {
    /// Methods to run; repeat or comma-separate.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ps-r")]
    method: Vec<MethodArg>,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, value_enum, default_value = "true")]
    iw: IwArg,
    #[command(flatten)]
    data: SynthData,
    #[command(flatten)]
    common: Common,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::UnboundedB { .. } | Error::InfiniteUpperBound { .. }) => EXIT_UNBOUNDED_B,
            _ => EXIT_INPUT,
        };
        Self { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type Outcome = Result<u8, Failure>;

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_reports(reports: &[TrialReport], common: &Common) -> anyhow::Result<()> {
    let mut out = output(common.out.as_deref())?;
    emit_report(reports, common.format.into(), &mut out)?;
    out.flush()?;
    Ok(())
}

fn finish(result: &CalibrationResult, config: serde_json::Value, common: &Common) -> Outcome {
    for d in &result.diagnostics {
        eprintln!("warning: {d}");
    }
    let mut report = TrialReport::single(config, result);
    if result.method == Method::Wsci {
        report.bound = None;
    }
    write_reports(&[report], common)?;
    Ok(if result.feasible { 0 } else { EXIT_INFEASIBLE })
}

fn read_target(path: Option<&Path>, method: Method) -> anyhow::Result<Vec<f64>> {
    let path = path.ok_or_else(|| anyhow!("{method} with estimated weights needs --target"))?;
    ingest::read_domain_probs(path).with_context(|| format!("reading {}", path.display()))
}

fn calibrate(args: &CalibrateArgs) -> Outcome {
    let c = &args.common;
    let method = Method::from(args.method);
    let data = ingest::read_calibration(&args.scores).with_context(|| format!("reading {}", args.scores.display()))?;
    let delta = ConfidenceLevel::new(c.delta)?;
    let config = serde_json::json!({
        "command": "calibrate",
        "method": method,
        "epsilon": c.epsilon,
        "delta": c.delta,
        "delta_c": c.delta_c,
        "delta_w": c.delta_w,
        "bins": c.bins,
        "smoothness_e": c.smoothness_e,
        "grid_step": c.grid_step,
        "grid_stop_factor": c.grid_stop_factor,
        "seed": c.seed,
        "b": args.b,
        "scores": args.scores,
        "target": args.target,
    });
    let fit = |heur: &[f64]| -> anyhow::Result<IwEstimate> {
        let target = read_target(args.target.as_deref(), method)?;
        let target_iws = target.iter().map(|&g| heuristic_iw(g)).collect::<pacset_core::Result<Vec<_>>>()?;
        Ok(IwEstimate::fit(heur, &target_iws, c.bins, c.smoothness_e, c.delta_w()?)?)
    };
    let heuristics = || data.heuristic_iws().ok_or_else(|| anyhow!("{method} needs a domain_prob column"));

    let result = match method {
        Method::Ps => ps_calibrate(&data.scores, c.epsilon, delta, c.solve_mode())?,
        Method::PsC => match args.b {
            Some(b) => ps_c_calibrate(&data.scores, c.epsilon, delta, b, c.solve_mode())?,
            None => {
                let est = fit(&heuristics()?)?;
                let b = pacset_core::estimate_b(&est.bounds)?;
                ps_c_calibrate(&data.scores, c.epsilon, c.delta_c()?, b.max(1.0), c.solve_mode())?
            }
        },
        Method::PsR => {
            let w = match &data.true_iw {
                Some(w) => w.clone(),
                None => heuristics()?,
            };
            let b = args.b.unwrap_or_else(|| w.iter().copied().fold(0.0, f64::max));
            ps_r_calibrate(&data.scores, &w, b, c.epsilon, delta, c.seed, c.solve_mode())?
        }
        Method::PsM => {
            let heur = heuristics()?;
            let est = fit(&heur)?;
            let w = est.point_weights_for(&heur)?;
            let b = args.b.map_or_else(|| est.point_b(), Ok)?;
            let mut r = ps_r_calibrate(&data.scores, &w, b, c.epsilon, delta, c.seed, c.solve_mode())?;
            r.method = Method::PsM;
            r
        }
        Method::PsW => {
            let (intervals, b_hat) = match &data.intervals {
                Some(iv) => (iv.clone(), None),
                None => {
                    let heur = heuristics()?;
                    let est = fit(&heur)?;
                    let b = pacset_core::estimate_b(&est.bounds)?;
                    (est.intervals_for(&heur), Some(b))
                }
            };
            let b = match (args.b, b_hat) {
                (Some(b), _) | (None, Some(b)) => b,
                (None, None) => intervals.iter().map(|iv: &IWInterval| iv.upper).fold(0.0, f64::max),
            };
            let set = UncertaintySet::new(intervals, c.delta_w()?);
            ps_w_calibrate(&data.scores, &set, b, c.epsilon, c.delta_c()?, &c.grid(), c.scan(), c.seed)?
        }
        Method::Wsci => {
            let w = match &data.true_iw {
                Some(w) => w.clone(),
                None => heuristics()?,
            };
            let tau = WsciCalibrator::new(data.scores.scores(), &w, c.epsilon)?.threshold(args.test_weight)?;
            CalibrationResult {
                method,
                tau_hat: tau,
                bound_at_tau: 1.0,
                error_count: pacset_core::predset::empirical_error_count(&data.scores, tau),
                n_accepted: data.scores.len() as u64,
                feasible: true,
                epsilon: c.epsilon,
                delta: c.delta,
                b: None,
                trace: Vec::new(),
                diagnostics: Vec::new(),
            }
        }
    };
    finish(&result, config, c)
}

fn evaluate_cmd(args: &EvaluateArgs) -> Outcome {
    let tau = match (args.tau, &args.result) {
        (Some(t), _) => t,
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let reports = pacset_core::report::read_json(&text)?;
            reports.first().ok_or_else(|| anyhow!("{} holds no report", p.display()))?.tau_hat
        }
        (None, None) => unreachable!("clap requires one"),
    };
    let tau = Threshold::new(tau)?;
    let file = File::open(&args.test).with_context(|| format!("reading {}", args.test.display()))?;
    let data = match &args.truth {
        Some(t) => {
            let truth = File::open(t).with_context(|| format!("reading {}", t.display()))?;
            ingest::parse_test_long(file, truth)?
        }
        None => ingest::parse_test_compact(file)?,
    };
    let eval = match &data {
        TestData::Labels(v) => evaluate_label_scores(v, tau)?,
        TestData::Compact { true_scores, set_sizes } => evaluate(true_scores, set_sizes, tau)?,
    };
    let mut out = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &serde_json::json!({ "tau": tau, "evaluation": eval }))
        .map_err(anyhow::Error::from)?;
    writeln!(out).map_err(anyhow::Error::from)?;
    Ok(0)
}

fn estimate_iw(args: &EstimateIwArgs) -> Outcome {
    let c = &args.common;
    let data = ingest::read_calibration(&args.scores).with_context(|| format!("reading {}", args.scores.display()))?;
    let heur = data
        .heuristic_iws()
        .ok_or_else(|| anyhow!("{} has no domain_prob column", args.scores.display()))?;
    let target = ingest::read_domain_probs(&args.target).with_context(|| format!("reading {}", args.target.display()))?;
    let target_iws = target.iter().map(|&g| heuristic_iw(g)).collect::<pacset_core::Result<Vec<_>>>()?;
    let est = IwEstimate::fit(&heur, &target_iws, c.bins, c.smoothness_e, c.delta_w()?)?;
    let mut out = output(c.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &est).map_err(anyhow::Error::from)?;
    writeln!(out).map_err(anyhow::Error::from)?;
    out.flush().map_err(anyhow::Error::from)?;
    match est.b_hat {
        Some(_) => Ok(0),
        None => {
            let err = pacset_core::estimate_b(&est.bounds).expect_err("b̂ is unbounded");
            eprintln!("error: {err}");
            Ok(EXIT_UNBOUNDED_B)
        }
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        writeln!(w, "{}", r.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn synth(args: &SynthArgs) -> Outcome {
    let config = args.data.config(args.seed);
    let data = synth_two_gaussian(&config)?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let dir = &args.out_dir;
    write_csv(
        &dir.join("source.csv"),
        &["example_id", "true_score", "domain_prob", "true_iw"],
        data.source.iter().enumerate().map(|(i, e)| {
            vec![
                i.to_string(),
                e.true_score().to_string(),
                e.domain_prob.to_string(),
                e.true_iw.to_string(),
            ]
        }),
    )?;
    write_csv(
        &dir.join("target.csv"),
        &["example_id", "domain_prob"],
        data.target.iter().enumerate().map(|(i, e)| vec![i.to_string(), e.domain_prob.to_string()]),
    )?;
    write_csv(
        &dir.join("test.csv"),
        &["example_id", "label_id", "score"],
        data.test.iter().enumerate().flat_map(|(i, e): (usize, &SynthExample)| {
            (0..2).map(move |y| vec![i.to_string(), y.to_string(), e.label_scores[y].to_string()])
        }),
    )?;
    write_csv(
        &dir.join("truth.csv"),
        &["example_id", "true_label_id"],
        data.test.iter().enumerate().map(|(i, e)| vec![i.to_string(), e.label.to_string()]),
    )?;
    serde_json::to_writer_pretty(
        std::io::stdout().lock(),
        &serde_json::json!({ "config": config, "b": data.b, "out_dir": dir }),
    )
    .map_err(anyhow::Error::from)?;
    println!();
    Ok(0)
}

fn mc(args: &McArgs) -> Outcome {
    let c = &args.common;
    let config = RunConfig {
        epsilon: c.epsilon,
        delta: c.delta,
        delta_c: c.delta_c,
        delta_w: c.delta_w,
        bins: c.bins,
        smoothness: c.smoothness_e,
        grid: c.grid(),
        scan: c.scan(),
        solver: match c.solver {
            SolverArg::Exact => Solver::Exact,
            SolverArg::Grid => Solver::Grid,
        },
        methods: args.method.iter().map(|&m| m.into()).collect(),
        iw: match args.iw {
            IwArg::True => IwMode::True,
            IwArg::Estimated => IwMode::Estimated,
        },
        synth: args.data.config(c.seed),
        seed: c.seed,
    };
    let reports = mc_validate(&config, args.trials)?;
    write_reports(&reports, c)?;
    Ok(0)
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::EstimateIw(a) => estimate_iw(a),
        Command::Synth(a) => synth(a),
        Command::McValidate(a) => mc(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
