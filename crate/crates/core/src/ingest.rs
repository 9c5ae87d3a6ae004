//! CSV inputs for calibration and evaluation.
//!
//! Calibration: `example_id,true_score[,domain_prob][,true_iw][,iw_lower,iw_upper]`.
//! Test, long form: `example_id,label_id,score` with a truth file
//! `example_id,true_label_id`. Test, compact: `example_id,true_score,n_labels_ge_tau`.
//! Target domain scores: `example_id,domain_prob`.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::iw::heuristic_iw;
use crate::predset::{LabelScores, ScoreSet};
use crate::robust::IWInterval;

/// Column-indexed access to one CSV table with line-numbered errors.
struct Table {
    index: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read<R: Read>(reader: R, required: &[&str]) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let index: HashMap<String, usize> = r
            .headers()?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let missing: Vec<String> = required
            .iter()
            .filter(|c| !index.contains_key(**c))
            .map(|c| c.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Schema { missing });
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::Parse {
                    line,
                    message: e.to_string(),
                }
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self { index, rows })
    }

    fn has(&self, col: &str) -> bool {
        self.index.contains_key(col)
    }

    fn raw<'a>(&self, row: &'a (u64, csv::StringRecord), col: &str) -> Result<&'a str> {
        row.1.get(self.index[col]).ok_or_else(|| Error::Parse {
            line: row.0,
            message: format!("missing field `{col}`"),
        })
    }

    fn float(&self, row: &(u64, csv::StringRecord), col: &str) -> Result<f64> {
        let s = self.raw(row, col)?;
        let v: f64 = s.parse().map_err(|_| Error::Parse {
            line: row.0,
            message: format!("`{col}` is not a number: {s:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: row.0,
                message: format!("`{col}` must be finite, got {s}"),
            });
        }
        Ok(v)
    }

    fn uint(&self, row: &(u64, csv::StringRecord), col: &str) -> Result<usize> {
        let s = self.raw(row, col)?;
        s.parse().map_err(|_| Error::Parse {
            line: row.0,
            message: format!("`{col}` is not a nonnegative integer: {s:?}"),
        })
    }

    /// Upper IW bounds may be written `inf`.
    fn upper(&self, row: &(u64, csv::StringRecord), col: &str) -> Result<f64> {
        let s = self.raw(row, col)?;
        match s.to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
            _ => self.float(row, col),
        }
    }

    fn optional<T>(
        &self,
        col: &str,
        f: impl Fn(&Self, &(u64, csv::StringRecord)) -> Result<T>,
    ) -> Result<Option<Vec<T>>> {
        if !self.has(col) {
            return Ok(None);
        }
        self.rows.iter().map(|r| f(self, r)).collect::<Result<_>>().map(Some)
    }
}

fn line_error(line: u64, e: Error) -> Error {
    match e {
        Error::Parse { .. } => e,
        other => Error::Parse {
            line,
            message: other.to_string(),
        },
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationData {
    pub ids: Vec<String>,
    pub scores: ScoreSet,
    pub domain_prob: Option<Vec<f64>>,
    pub true_iw: Option<Vec<f64>>,
    pub intervals: Option<Vec<IWInterval>>,
}

impl CalibrationData {
    /// Heuristic IWs from the `domain_prob` column, if present.
    pub fn heuristic_iws(&self) -> Option<Vec<f64>> {
        self.domain_prob
            .as_ref()
            .map(|p| p.iter().map(|&g| heuristic_iw(g).expect("validated on ingest")).collect())
    }
}

pub fn parse_calibration<R: Read>(reader: R) -> Result<CalibrationData> {
    let t = Table::read(reader, &["example_id", "true_score"])?;
    if t.rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no calibration rows".into(),
        });
    }
    if t.has("iw_lower") != t.has("iw_upper") {
        let missing = if t.has("iw_lower") { "iw_upper" } else { "iw_lower" };
        return Err(Error::Schema {
            missing: vec![missing.into()],
        });
    }
    let mut ids = Vec::with_capacity(t.rows.len());
    let mut scores = Vec::with_capacity(t.rows.len());
    for row in &t.rows {
        ids.push(t.raw(row, "example_id")?.to_string());
        let s = t.float(row, "true_score")?;
        if s < 0.0 {
            return Err(Error::Parse {
                line: row.0,
                message: format!("`true_score` must be nonnegative, got {s}"),
            });
        }
        scores.push(s);
    }
    let domain_prob = t.optional("domain_prob", |t, row| {
        let g = t.float(row, "domain_prob")?;
        heuristic_iw(g).map_err(|e| line_error(row.0, e))?;
        Ok(g)
    })?;
    let true_iw = t.optional("true_iw", |t, row| {
        let w = t.float(row, "true_iw")?;
        if w < 0.0 {
            return Err(Error::Parse {
                line: row.0,
                message: format!("`true_iw` must be nonnegative, got {w}"),
            });
        }
        Ok(w)
    })?;
    let intervals = t.optional("iw_lower", |t, row| {
        let lo = t.float(row, "iw_lower")?;
        let hi = t.upper(row, "iw_upper")?;
        IWInterval::new(lo, hi).map_err(|e| line_error(row.0, e))
    })?;
    Ok(CalibrationData {
        ids,
        scores: ScoreSet::new(scores)?,
        domain_prob,
        true_iw,
        intervals,
    })
}

pub fn read_calibration(path: &Path) -> Result<CalibrationData> {
    parse_calibration(std::fs::File::open(path)?)
}

/// Target-domain classifier probabilities `example_id,domain_prob`.
pub fn parse_domain_probs<R: Read>(reader: R) -> Result<Vec<f64>> {
    let t = Table::read(reader, &["example_id", "domain_prob"])?;
    t.rows
        .iter()
        .map(|row| {
            let g = t.float(row, "domain_prob")?;
            heuristic_iw(g).map_err(|e| line_error(row.0, e))?;
            Ok(g)
        })
        .collect()
}

pub fn read_domain_probs(path: &Path) -> Result<Vec<f64>> {
    parse_domain_probs(std::fs::File::open(path)?)
}

/// Test data in either supported layout.
#[derive(Debug, Clone, PartialEq)]
pub enum TestData {
    Labels(Vec<LabelScores>),
    /// True-label scores with externally computed set sizes.
    Compact { true_scores: Vec<f64>, set_sizes: Vec<usize> },
}

/// Long-form label scores joined with a truth file, in first-seen example order.
pub fn parse_test_long<R: Read, S: Read>(scores: R, truth: S) -> Result<TestData> {
    let t = Table::read(scores, &["example_id", "label_id", "score"])?;
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<(usize, f64)>> = HashMap::new();
    for row in &t.rows {
        let id = t.raw(row, "example_id")?.to_string();
        let label = t.uint(row, "label_id")?;
        let s = t.float(row, "score")?;
        let entry = by_id.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        if entry.iter().any(|&(l, _)| l == label) {
            return Err(Error::Parse {
                line: row.0,
                message: format!("duplicate label {label} for example {id}"),
            });
        }
        entry.push((label, s));
    }
    let truth_t = Table::read(truth, &["example_id", "true_label_id"])?;
    let mut truth_map: HashMap<String, (u64, usize)> = HashMap::new();
    for row in &truth_t.rows {
        let id = truth_t.raw(row, "example_id")?.to_string();
        truth_map.insert(id, (row.0, truth_t.uint(row, "true_label_id")?));
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut labels = by_id.remove(&id).expect("recorded");
        labels.sort_by_key(|&(l, _)| l);
        let (line, true_label) = *truth_map.get(&id).ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("example {id} has no true label"),
        })?;
        let pos = labels.iter().position(|&(l, _)| l == true_label).ok_or_else(|| Error::Parse {
            line,
            message: format!("true label {true_label} of example {id} has no score"),
        })?;
        out.push(LabelScores {
            true_label: pos,
            scores: labels.into_iter().map(|(_, s)| s).collect(),
        });
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no test rows".into(),
        });
    }
    Ok(TestData::Labels(out))
}

pub fn parse_test_compact<R: Read>(reader: R) -> Result<TestData> {
    let t = Table::read(reader, &["example_id", "true_score", "n_labels_ge_tau"])?;
    let mut true_scores = Vec::with_capacity(t.rows.len());
    let mut set_sizes = Vec::with_capacity(t.rows.len());
    for row in &t.rows {
        true_scores.push(t.float(row, "true_score")?);
        set_sizes.push(t.uint(row, "n_labels_ge_tau")?);
    }
    if true_scores.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no test rows".into(),
        });
    }
    Ok(TestData::Compact { true_scores, set_sizes })
}
