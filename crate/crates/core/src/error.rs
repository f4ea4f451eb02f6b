use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("label out of range: {0}")]
    LabelRange(String),

    #[error("degenerate weight for column {index}: nu = {value}")]
    DegenerateWeight { index: usize, value: f64 },

    #[error("enumeration of C({p},{m}) = {count} supports exceeds the guard of {limit}")]
    EnumerationGuard {
        p: usize,
        m: usize,
        count: u128,
        limit: u128,
    },

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("solver stopped after {iterations} sweeps with KKT residual {kkt_residual:e}")]
    NotConverged { iterations: usize, kkt_residual: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("sample size {n} below the required minimum {required:.3}")]
    SampleSizeGate { n: usize, required: f64 },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error in {path:?}: {message}")]
    Csv { path: Option<PathBuf>, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short stable identifier used by the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::LabelRange(_) => "label_range",
            Error::DegenerateWeight { .. } => "degenerate_weight",
            Error::EnumerationGuard { .. } => "enumeration_guard",
            Error::RankDeficient(_) => "rank_deficient",
            Error::LinearAlgebra(_) => "linear_algebra",
            Error::NotConverged { .. } => "not_converged",
            Error::Empty(_) => "empty_input",
            Error::SampleSizeGate { .. } => "sample_size_gate",
            Error::InvalidDensity(_) => "invalid_density",
            Error::Config(_) => "config",
            Error::Csv { .. } => "csv",
            Error::Io(_) => "io",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv {
            path: None,
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
