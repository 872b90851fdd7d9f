use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state space of {count} states exceeds the cap of {cap}; {hint}")]
    StateCap { count: f64, cap: usize, hint: &'static str },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("level {level} out of range 0..={max}")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("point {x} outside [{lo}, {hi}]")]
    PointOutOfRange { x: i64, lo: i64, hi: i64 },

    #[error("n = {n} must be divisible by {divisor} for this experiment")]
    Divisibility { n: u32, divisor: u32 },

    #[error("class distribution has no interior minimum; no trace threshold exists")]
    NoTrace,

    #[error("no coexistence window: {0}; choose mu inside (4 ln 2, 3)")]
    Window(String),

    #[error("inconsistent chain: {0}")]
    InconsistentChain(String),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid cut: {0}")]
    InvalidCut(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
