use thiserror::Error;

/// Errors produced by the imaging pipeline.
///
/// Variants split into validation failures (rejected inputs) and numerical
/// failures (a computation that could not be completed at the requested
/// tolerance). The CLI maps these onto exit codes 2 and 3 respectively.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("non-positive velocity at node ({ix}, {iy}): {value}")]
    NonPositiveVelocity { ix: usize, iy: usize, value: f64 },

    #[error("grid too small: {nx}x{ny}, need at least 3x3")]
    GridTooSmall { nx: usize, ny: usize },

    #[error(
        "stability violated: (tau/s)^2 * lambda_max = {product} >= 4 (lambda_max = {lambda_max})"
    )]
    Unstable { lambda_max: f64, product: f64 },

    #[error("operator exponential approximation residual {residual} above tolerance {tol}")]
    ExpResidual { residual: f64, tol: f64 },

    #[error("non-finite field value at time step {step}")]
    NonFinite { step: usize },

    #[error("Schur complement at block {block} not positive definite (min eigenvalue {min_eig})")]
    NotPositiveDefinite { block: usize, min_eig: f64 },

    #[error("regularization parameter exceeded cap {cap} (last mu = {mu})")]
    MuCapExceeded { mu: f64, cap: f64 },

    #[error("dimension mismatch: {0}")]
    Mismatch(String),

    #[error("file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by rejected inputs rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::NonPositiveVelocity { .. }
                | Error::GridTooSmall { .. }
                | Error::Mismatch(_)
                | Error::Format(_)
        )
    }
}
