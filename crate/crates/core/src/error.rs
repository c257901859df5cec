use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the detector stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("alphabet must have at least 2 states, got {0}")]
    InvalidAlphabet(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("row {row} is not stochastic: sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },

    #[error("entry ({row}, {col}) = {value} is not a valid probability")]
    InvalidEntry { row: usize, col: usize, value: f64 },

    #[error("entry ({row}, {col}) must be strictly positive")]
    NotStrictlyPositive { row: usize, col: usize },

    #[error("probability law does not sum to 1 (sum = {0})")]
    NotNormalized(f64),

    #[error("degenerate law: row {row} has zero mass")]
    DegenerateLaw { row: usize },

    #[error("balance identity violated at state {state}: row mass {row_mass} vs column mass {col_mass}")]
    BalanceViolation {
        state: usize,
        row_mass: f64,
        col_mass: f64,
    },

    #[error("support violation: reference law is zero at lifted symbol {0} (1-based)")]
    SupportViolation(usize),

    #[error("symbol {symbol} out of range for alphabet of size {size}")]
    SymbolOutOfRange { symbol: usize, size: usize },

    #[error("empty symbol sequence")]
    EmptySequence,

    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("covariance has not been PSD-repaired; call psd_repair first")]
    NotPsd,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("PL alphabet size {found} does not match quantizer alphabet size {expected}")]
    AlphabetMismatch { expected: usize, found: usize },

    #[error("empty traffic stream")]
    EmptyTraffic,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
