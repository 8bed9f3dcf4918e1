use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A data row could not be parsed. `row` is the 1-based data row (header excluded).
    #[error("row {row}, field `{field}`: {reason}")]
    Parse {
        row: usize,
        field: String,
        reason: String,
    },

    #[error("insufficient sample for trimming: need at least 3 observations, got {0}")]
    InsufficientSample(usize),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("rank-deficient design: collinear columns [{}]", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("too few observations: n = {n} is below k = {k}")]
    TooFewObservations { n: usize, k: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate residual covariance")]
    DegenerateCovariance,

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("draw store of {bytes} bytes exceeds the {cap}-byte cap")]
    DrawStoreTooLarge { bytes: usize, cap: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("all simulated densities underflowed for observation {0}")]
    Underflow(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
