use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the workbench.
///
/// The CLI maps [`Error::is_runtime`] failures to exit code 2 and everything
/// else to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("simulation blow-up: {component} = {value} °C left the plausible band [-30, 100] °C")]
    SimulationBlowup { component: &'static str, value: f64 },

    #[error("heat pump outside heating regime: supply {t_sup} °C must exceed source {t_src} °C")]
    NotHeating { t_sup: f64, t_src: f64 },

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("environment must be reset before stepping")]
    NeedsReset,

    #[error("action is not finite: {0}")]
    NonFiniteAction(f64),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("forecast too short: need {needed} samples, got {got}")]
    ForecastTooShort { needed: usize, got: usize },

    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that happen while running (divergence, blow-up, I/O)
    /// as opposed to bad inputs.
    pub fn is_runtime(&self) -> bool {
        matches!(
            self,
            Error::SimulationBlowup { .. } | Error::Divergence { .. } | Error::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
