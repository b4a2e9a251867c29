use thiserror::Error;

/// Errors raised by the signal, reservoir, plant, learner and harness layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid config: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("index {index} out of range for signal of length {len}")]
    Index { index: usize, len: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("cannot scale reservoir matrix: spectral radius {radius:e} is numerically zero")]
    Scaling { radius: f64 },

    #[error("plant diverged: output {value} exceeds the divergence bound")]
    PlantDiverged { value: f64 },

    #[error("learner diverged: {reason}")]
    LearnerDiverged { reason: String },

    #[error("tick {tick}: {source}")]
    AtTick {
        tick: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_tick(self, tick: usize) -> Self {
        Error::AtTick {
            tick,
            source: Box::new(self),
        }
    }

    /// True for plant or learner divergence, possibly wrapped with a tick index.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::PlantDiverged { .. } | Error::LearnerDiverged { .. } => true,
            Error::AtTick { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
