//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: String },
    #[error("no resonance: {0}")]
    NoResonance(String),
    #[error("unsupported order {order}: {reason}")]
    UnsupportedOrder { order: usize, reason: String },
    #[error("truncation cap exceeded: {0}")]
    CapExceeded(String),
    #[error("homological equation is not solvable: {0}")]
    Unsolvable(String),
    #[error("degenerate equilibrium at psi = {psi0}")]
    Degenerate { psi0: f64 },
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("numerical blow-up at t = {t}")]
    BlowUp { t: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn domain(value: f64, domain: impl Into<String>) -> Self {
        Error::Domain {
            value,
            domain: domain.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::Io(_) => 2,
            Error::NoResonance(_)
            | Error::Degenerate { .. }
            | Error::AssumptionViolated(_)
            | Error::UnsupportedOrder { .. }
            | Error::Domain { .. } => 3,
            Error::CapExceeded(_)
            | Error::Unsolvable(_)
            | Error::BlowUp { .. }
            | Error::Numerical(_) => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
