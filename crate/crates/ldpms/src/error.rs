//! Crate-wide error type with the CLI exit-code mapping.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("assumption violated ({name}): {detail}")]
    Assumption { name: &'static str, detail: String },
    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:.3e}, best value {best_value:.6e})")]
    Convergence {
        iterations: usize,
        grad_norm: f64,
        best_value: f64,
        /// Best iterate reached before giving up; kept for diagnostics.
        best: Box<crate::rate::Minimized>,
    },
    #[error("simulation failed at step {step}: {detail}")]
    Simulation { step: usize, detail: String },
    #[error("input error: {0}")]
    Input(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("density bound diverges: {0}")]
    BoundDivergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 config/usage, 3 assumption failure, 4 numerical
    /// non-convergence, 5 I/O. Simulation blowups count as numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) | Error::Domain(_) | Error::GridMismatch(_) => 2,
            Error::Assumption { .. } | Error::BoundDivergence(_) => 3,
            Error::Convergence { .. } | Error::Simulation { .. } => 4,
            Error::Io(_) => 5,
        }
    }
}
