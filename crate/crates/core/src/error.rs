use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("quadrature did not converge (last estimates {previous:e} and {last:e})")]
    QuadratureAccuracy { previous: f64, last: f64 },

    #[error("matrix is not Hermitian (asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive definite (min eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("{0} decomposition did not converge")]
    Decomposition(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("bound is infinite: {0}")]
    InfiniteBound(&'static str),

    #[error("rate target {rbar} exceeds channel capacity {r_max}")]
    Infeasible { rbar: f64, r_max: f64 },

    #[error("channel matrix is zero")]
    ZeroChannel,

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solver failed to converge: {reason} (residual {residual:e})")]
    SolverFailure { reason: String, residual: f64 },
}
