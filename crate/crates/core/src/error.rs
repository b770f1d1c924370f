use thiserror::Error;

/// Errors produced by the library and mapped onto CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid of {grid} points cannot resolve bandwidth {bandwidth} (detail: {detail})")]
    AliasingBudgetExceeded {
        grid: usize,
        bandwidth: usize,
        detail: String,
    },

    #[error("map family is not expanding: {0}")]
    NotExpanding(String),

    #[error(
        "no Cauchy convergence after {iterations} pullback steps (last increment {increment:e}){}",
        eps.map(|e| format!(" at eps = {e}")).unwrap_or_default()
    )]
    NonMixing {
        iterations: usize,
        increment: f64,
        eps: Option<f64>,
    },

    #[error("mixing rate {rate} is not below the threshold {threshold}")]
    RateTooSlow { rate: f64, threshold: f64 },

    #[error("derivative of order {requested} requested but the family has order {available}")]
    Order { requested: usize, available: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code contract of the command line front-end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Parse { .. } | Error::InvalidArgument(_) => 2,
            Error::NotExpanding(_) | Error::NonMixing { .. } | Error::RateTooSlow { .. } => 3,
            Error::AliasingBudgetExceeded { .. } => 4,
            Error::Order { .. } => 2,
            Error::Io(_) => 1,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
