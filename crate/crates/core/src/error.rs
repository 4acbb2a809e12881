use thiserror::Error;

/// Errors raised by the reliability toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("limit-state evaluation diverged at theta = {theta:?}")]
    Evaluation { theta: Vec<f64> },

    #[error("design set holds {have} points, local fit needs {need}; top up with a warm start first")]
    DesignTooSmall { have: usize, need: usize },

    #[error("response is constant; nothing to regress")]
    ConstantResponse,

    #[error("no progress at level {level}: threshold {next} did not fall below {current}")]
    Stagnation { level: usize, current: f64, next: f64 },

    #[error("exceeded {max_levels} levels (last threshold {last_threshold})")]
    MaxLevels { max_levels: usize, last_threshold: f64 },

    #[error("unknown benchmark id `{0}`")]
    UnknownBenchmark(String),
}

pub type Result<T> = std::result::Result<T, Error>;
