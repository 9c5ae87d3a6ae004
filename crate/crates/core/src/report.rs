//! JSON and CSV serialization of trial reports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{quantile, TrialReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(crate::error::invalid(format!("unknown report format `{other}`"))),
        }
    }
}

/// Aggregate rows appended per method in CSV output.
pub const AGGREGATE_ROWS: [&str; 6] = ["mean", "q10", "q25", "q50", "q75", "q90"];

const CSV_HEADER: [&str; 12] = [
    "kind",
    "method",
    "trial",
    "seed",
    "tau_hat",
    "bound",
    "n_accepted",
    "feasible",
    "test_error",
    "true_error",
    "mean_size",
    "violated",
];

fn check(reports: &[TrialReport]) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::EmptyReport);
    }
    Ok(())
}

pub fn write_json<W: Write>(reports: &[TrialReport], mut out: W) -> Result<()> {
    check(reports)?;
    serde_json::to_writer_pretty(&mut out, reports)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_json(text: &str) -> Result<Vec<TrialReport>> {
    Ok(serde_json::from_str(text)?)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per trial followed by the aggregate block for each method.
///
/// In aggregate rows `violated` holds the violation rate and `feasible` the
/// feasible fraction; the quantile rows apply to the numeric columns.
pub fn write_csv<W: Write>(reports: &[TrialReport], out: W) -> Result<()> {
    check(reports)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for rep in reports {
        let tag = rep.method.tag();
        for t in &rep.trials {
            w.write_record([
                "trial".to_string(),
                tag.to_string(),
                t.trial.to_string(),
                t.seed.to_string(),
                t.tau_hat.to_string(),
                opt(t.bound),
                opt(t.n_accepted),
                t.feasible.to_string(),
                t.test_error.to_string(),
                opt(t.true_error),
                t.mean_size.to_string(),
                t.violated.to_string(),
            ])?;
        }
        if rep.trials.is_empty() {
            w.write_record([
                "single".to_string(),
                tag.to_string(),
                String::new(),
                String::new(),
                rep.tau_hat.to_string(),
                opt(rep.bound),
                opt(rep.n_accepted),
                rep.feasible.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ])?;
            continue;
        }
        let column = |f: &dyn Fn(&crate::harness::TrialRecord) -> Option<f64>| -> Vec<f64> {
            let mut v: Vec<f64> = rep.trials.iter().filter_map(f).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let cols = [
            column(&|t| Some(t.tau_hat)),
            column(&|t| t.bound),
            column(&|t| t.n_accepted.map(|n| n as f64)),
            column(&|t| Some(t.test_error)),
            column(&|t| t.true_error),
            column(&|t| Some(t.mean_size)),
        ];
        let n = rep.trials.len() as f64;
        let feasible = rep.trials.iter().filter(|t| t.feasible).count() as f64 / n;
        let violated = rep.trials.iter().filter(|t| t.violated).count() as f64 / n;
        for kind in AGGREGATE_ROWS {
            let stat = |v: &Vec<f64>| -> String {
                if v.is_empty() {
                    return String::new();
                }
                let x = match kind {
                    "mean" => v.iter().sum::<f64>() / v.len() as f64,
                    q => quantile(v, q[1..].parse::<f64>().expect("quantile row") / 100.0),
                };
                x.to_string()
            };
            let (feas, viol) = if kind == "mean" {
                (feasible.to_string(), violated.to_string())
            } else {
                (String::new(), String::new())
            };
            w.write_record([
                kind.to_string(),
                tag.to_string(),
                String::new(),
                String::new(),
                stat(&cols[0]),
                stat(&cols[1]),
                stat(&cols[2]),
                feas,
                stat(&cols[3]),
                stat(&cols[4]),
                stat(&cols[5]),
                viol,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_report<W: Write>(reports: &[TrialReport], format: ReportFormat, out: W) -> Result<()> {
    match format {
        ReportFormat::Json => write_json(reports, out),
        ReportFormat::Csv => write_csv(reports, out),
    }
}
