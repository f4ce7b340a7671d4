use thiserror::Error;

/// Errors raised anywhere in the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no clearing: supply and demand curves do not intersect")]
    NoClearing,
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("all rows dropped while cleaning the design matrix")]
    AllRowsDropped,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite log density or gradient during sampling (iteration {0})")]
    NonFiniteGradient(usize),
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),
    #[error("undefined value: {0}")]
    Undefined(String),
    #[error("forecast keys do not match: {0}")]
    KeyMismatch(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
