use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    /// A per-example importance-weight interval has an infinite upper end,
    /// which rejection sampling with a finite bound cannot honour.
    #[error("example {index} has an infinite importance-weight upper bound but b = {b} is finite")]
    InfiniteUpperBound { index: usize, b: f64 },

    #[error(
        "maximum importance weight is unbounded: bin {bin} has an infinite upper IW bound \
         (source count {source_count}); use more calibration samples, fewer bins, or a smaller E"
    )]
    UnboundedB { bin: usize, source_count: u64 },

    #[error("cannot build {bins} bins from {distinct} distinct values")]
    DegenerateBins { bins: usize, distinct: usize },

    #[error("bin {bin} has no source examples; the point importance weight is undefined")]
    EmptySourceBin { bin: usize },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing required column(s): {}", .missing.join(", "))]
    Schema { missing: Vec<String> },

    #[error("report has no trials")]
    EmptyReport,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
