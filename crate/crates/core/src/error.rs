use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state")]
    InvalidState,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("regenerative regime unsupported")]
    Regenerative,

    #[error("integration diverged at t = {t:.6} s")]
    Diverged { t: f64 },

    #[error("stall detected at {voltage:.3} V (no cycle completed within {max_cycle_time} s)")]
    Stall { voltage: f64, max_cycle_time: f64 },

    #[error("empty cycle record")]
    EmptyRecord,

    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("unknown load condition `{0}`")]
    UnknownLoad(String),

    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),

    #[error("plant cannot run: stall at V_max = {0:.3} V")]
    PlantCannotRun(f64),

    #[error("every grid voltage stalled")]
    AllStalled,

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Whether the error comes from the plant or the controller (as opposed
    /// to bad input). The CLI maps these to a distinct exit code.
    pub fn is_fatal_runtime(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. } | Error::Stall { .. } | Error::PlantCannotRun(_) | Error::AllStalled
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
