use thiserror::Error;

use crate::engine::Micros;

/// Errors raised while running a simulation.
///
/// Every invariant breach is fatal: the run stops and the error carries the
/// virtual time and a description of what went wrong.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invariant violated at t={time}us: {what}")]
    Invariant { time: Micros, what: String },
}

impl SimError {
    pub(crate) fn invariant(time: Micros, what: impl Into<String>) -> Self {
        SimError::Invariant {
            time,
            what: what.into(),
        }
    }
}

/// Scenario file parse errors.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },

    #[error("line {line}: invalid value `{value}` for `{key}`: {msg}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
        msg: String,
    },

    #[error("missing required key `{key}` in [{section}] starting at line {line}")]
    MissingKey {
        line: usize,
        section: String,
        key: String,
    },

    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(
        "path {path_id}: only {windows} usable congestion-avoidance RTT windows, need {required}"
    )]
    InsufficientGrowthSamples {
        path_id: usize,
        windows: usize,
        required: usize,
    },
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Sim(#[from] SimError),

    #[error("{path}: {msg}")]
    Malformed { path: String, msg: String },
}
