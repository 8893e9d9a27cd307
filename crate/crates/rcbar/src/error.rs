use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or model description violates its invariants.
    #[error("invalid law: {0}")]
    InvalidLaw(String),

    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A least-squares design matrix cannot be inverted reliably.
    #[error("design matrix {matrix} is numerically singular (condition ratio {condition:.3e})")]
    SingularDesign {
        matrix: &'static str,
        condition: f64,
    },

    /// The tree-average moment of the given order has no finite limit.
    #[error("moment of order {order} is unstable: E[a^{order}] + E[b^{order}] = {sum} >= 2")]
    UnstableMoment { order: usize, sum: f64 },

    /// A matrix that must be invertible failed its Cholesky factorization.
    #[error("matrix {0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    /// A run was requested on a model that fails a required hypothesis.
    #[error("hypothesis gate failed: {0}")]
    HypothesisGate(String),

    /// Too many replicates of a Monte Carlo run failed to produce estimates.
    #[error("{failed} of {total} replicates failed with singular designs (limit is 1%)")]
    TooManyFailures { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
