use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("state {state} has no outgoing edge")]
    IsolatedState { state: usize },

    #[error("chain is not irreducible: state {unreachable} is not mutually reachable from state 0")]
    NotIrreducible { unreachable: usize },

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("stationary solve did not converge (residual {residual:.3e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),

    #[error("function has zero norm")]
    ZeroFunction,

    #[error("function length {got} does not match state count {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("function has a non-finite entry at state {0}")]
    NonFinite(usize),

    #[error("vertex set is empty")]
    EmptySet,

    #[error("vertex index {index} out of range for {n} states")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("instance too large for exhaustive search: n = {n} exceeds cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("trace condition fails: value {value:.6e} < delta {delta:.6e}")]
    CertificateFails { value: f64, delta: f64 },

    #[error("precondition fails: {0}")]
    PreconditionFails(String),

    #[error("gamma = {gamma:.6e} is outside (0, 1]; lambda_k is too large for this (k, A)")]
    GammaOutOfRange { gamma: f64 },

    #[error("parameter out of range: {0}")]
    BadRange(String),

    #[error("sweep input has a negative entry {value:.3e} at state {state}")]
    NegativeInput { state: usize, value: f64 },

    #[error("no nonempty threshold set fits the measure budget {budget:.6e}")]
    NoFeasibleThreshold { budget: f64 },

    #[error("guarantee violated: {0}")]
    GuaranteeViolated(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line tool: 3 signals an internal
    /// guarantee failure, 2 everything the caller can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::GuaranteeViolated(_)
            | Error::NoFeasibleThreshold { .. }
            | Error::EigensolverFailure(_)
            | Error::NoConvergence { .. } => 3,
            _ => 2,
        }
    }
}
