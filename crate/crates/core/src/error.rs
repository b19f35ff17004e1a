use thiserror::Error;

/// Errors raised by the solver and simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not stochastic: {0}")]
    NotStochastic(String),

    #[error("transition matrix is not irreducible")]
    NotIrreducible,

    #[error("linear system is numerically singular: {0}")]
    SingularSystem(String),

    #[error("index {index} out of range for {len} states")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("grid with {points} points exceeds the cap of {cap}")]
    SizeOverflow { points: u128, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("split is not Bayes-plausible: barycenter deviates by {deviation:e}")]
    NotBayesPlausible { deviation: f64 },

    #[error("bad split weights: {0}")]
    BadWeights(String),

    #[error("invalid split: {0}")]
    InvalidSplit(Box<Error>),

    #[error("invalid signal kernel: {0}")]
    InvalidKernel(String),

    #[error("payoff is negative ({value}) at grid point {index}")]
    NegativePayoff { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e}, threshold {threshold:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        threshold: f64,
    },

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("bad revelation rates: need 0 < x < y <= 1, got x={x}, y={y}")]
    BadRates { x: f64, y: f64 },

    #[error("all {samples} replications were rejected by the conditioning event")]
    AllRejected { samples: usize },

    #[error("tail probability P(Y > {n}) is below 1e-300")]
    DegenerateTail { n: u64 },

    #[error("revelation rate {0} is on the boundary")]
    RateBoundary(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
