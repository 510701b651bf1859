use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("tied event times: {}", format_times(.times))]
    TiedEventTimes { times: Vec<f64> },

    #[error("cause {cause} out of range 1..={num_causes}")]
    InvalidCause { cause: u32, num_causes: u32 },

    #[error("Cox fit for cause {cause} did not converge: {diagnostic}")]
    Nonconvergence { cause: u32, diagnostic: String },

    #[error("Method 3 running prefix went negative ({value:e}) at event {event}")]
    NegativePrefix { event: usize, value: f64 },

    #[error("cannot combine estimates from different methods or covariate profiles")]
    MixedMethods,

    #[error("bootstrap refits failed {failures} times (cap {cap})")]
    BootstrapFitFailure { failures: usize, cap: usize },

    #[error("sigma calibration failed: {0}")]
    CalibrationFailure(String),

    #[error("root finding failed: {0}")]
    RootFindFailure(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: column `{column}` is not numeric: {value:?}")]
    NonnumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: follow-up time must be finite and > 0, got {value}")]
    NonpositiveTime { row: usize, value: f64 },

    #[error("row {row}: unknown event code {value:?}")]
    UnknownEventCode { row: usize, value: String },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {source}")]
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

fn format_times(times: &[f64]) -> String {
    let shown: Vec<String> = times.iter().take(10).map(|t| t.to_string()).collect();
    if times.len() > 10 {
        format!("{} (and {} more)", shown.join(", "), times.len() - 10)
    } else {
        shown.join(", ")
    }
}
