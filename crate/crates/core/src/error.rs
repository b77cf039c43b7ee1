use thiserror::Error;

/// Errors produced while building, assembling or solving a coupled problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid manufactured case: {0}")]
    InvalidCase(String),
    #[error("{solver} did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    SolverFailure {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("indefinite preconditioner: <r, P r> = {0:.3e}")]
    IndefinitePreconditioner(f64),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("construction error: {0}")]
    Construction(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
