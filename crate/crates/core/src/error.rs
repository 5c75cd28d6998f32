use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lag {lag} exceeds the truncation horizon {truncation}")]
    TruncationExceeded { lag: usize, truncation: usize },

    #[error("matrix is not invertible (smallest eigenvalue {min_eigenvalue:e})")]
    NotInvertible { min_eigenvalue: f64 },

    #[error("inversion residual {residual:e} exceeds tolerance {tolerance:e}")]
    InversionResidual { residual: f64, tolerance: f64 },

    #[error("dimension p = {p} exceeds the configured cap {cap}")]
    DimensionTooLarge { p: usize, cap: usize },

    #[error("precision matrix is not available")]
    MissingPrecision,

    #[error("beta = {beta} is outside the Gaussian regime (beta must exceed 3/4)")]
    OutOfRegime { beta: f64 },

    #[error("invalid simulation plan: {0}")]
    InvalidPlan(String),

    #[error("FFT buffer of {requested} elements exceeds the budget of {cap}")]
    MemoryBudget { requested: usize, cap: usize },

    #[error("imaginary residue {residue:e} after inverse FFT (output magnitude {magnitude:e})")]
    FftResidue { residue: f64, magnitude: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("high-dimensional sample: p = {p} is not below n = {n}")]
    HighDimensional { p: usize, n: usize },

    #[error("sample covariance is near singular (min eigenvalue {min_eigenvalue:e}, condition estimate {condition:e})")]
    NearSingular { min_eigenvalue: f64, condition: f64 },

    #[error("block length {l} is outside [1, {n}]")]
    BlockLength { l: usize, n: usize },

    #[error("level {0} is outside (0, 1)")]
    Level(f64),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("matrix is indefinite (eigenvalue {min_eigenvalue:e}, largest {max_eigenvalue:e})")]
    Indefinite {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("series too short: {len} < {min}")]
    SeriesTooShort { len: usize, min: usize },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("label sets differ between subjects")]
    InconsistentLabels,

    #[error("malformed sample batch: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
