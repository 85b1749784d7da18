use thiserror::Error;

/// Errors raised by the solvers, the simulator and the CLI.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("energy violation: spending {spent} exceeds battery level {level}")]
    EnergyViolation { spent: f64, level: f64 },

    #[error("no convergence after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("insufficient epochs: observed {observed}, need at least {required}")]
    InsufficientEpochs { observed: usize, required: usize },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) | Error::Config(_) => "config",
            Error::Io(_) => "io",
            _ => "solver",
        }
    }

    /// Process exit status: 2 for bad input, 3 for solver failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 2,
            "io" => 4,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
