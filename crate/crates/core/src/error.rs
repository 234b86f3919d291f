use thiserror::Error;

/// Errors raised by model construction, the solvers, and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("matrix is not Hurwitz (max real eigenvalue part {max_real:.3e})")]
    NotHurwitz { max_real: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("matching condition infeasible: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    MatchingInfeasible { residual: f64, tol: f64 },

    #[error("Lyapunov solve failed: residual {residual:.3e} above {bound:.3e}")]
    LyapunovResidual { residual: f64, bound: f64 },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("optimization problem is infeasible: {0}")]
    Infeasible(String),

    #[error("solver hit the iteration limit ({0})")]
    MaxIters(usize),

    #[error("invalid lipschitz estimate: {0}")]
    Lipschitz(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("config error: {key} {message}")]
    Config { key: String, message: String },

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
