use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced at tape node {node}")]
    NonFinite { node: usize },

    #[error("column {col} sums to {sum}, expected 1")]
    NotNormalized { col: usize, sum: f64 },

    #[error("degenerate IMV: no forward motion (terminal value {terminal})")]
    DegenerateImv { terminal: f64 },

    #[error("no complete monotonic path: T1={t1} exceeds T2={t2}")]
    Infeasible { t1: usize, t2: usize },

    #[error("function is not deterministic: evaluations gave {first} and {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    #[error("model has not been trained")]
    Untrained,
}
