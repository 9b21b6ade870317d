use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A local matrix that must be symmetric positive definite failed its
    /// Cholesky factorization.
    #[error("{what} is not positive definite on element {element}")]
    NotPositiveDefinite { what: &'static str, element: usize },

    #[error("global system is not positive definite ({0})")]
    IndefiniteSystem(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("postprocessing failed on element {element}")]
    Postprocess { element: usize },

    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
