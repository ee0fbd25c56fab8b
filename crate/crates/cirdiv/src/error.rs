//! Error type shared by the whole crate.

use thiserror::Error;

/// Errors reported by the analytic and Monte-Carlo layers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The parameter regime does not admit the requested object
    /// (e.g. a finite waiting barrier in the low-volatility regime).
    #[error("regime error: {0}")]
    Regime(String),

    /// A numerical procedure failed to converge or to bracket a root.
    /// Never silently clamped; the caller decides what to do.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An inconsistent simulation or output configuration.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code the CLI maps this error to (2 = validation, 3 = numerical).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Regime(_) | Error::Config(_) => 2,
            Error::Numerical(_) => 3,
        }
    }
}
