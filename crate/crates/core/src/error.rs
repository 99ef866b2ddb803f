use thiserror::Error;

/// Errors raised by the state algebra, estimators and the experiment runner.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The OPO spectrum denominator vanishes (at or above threshold).
    #[error("singular OPO spectrum: {0}")]
    Singular(String),

    /// The upstream reference is indistinguishable from vacuum, so T cannot be formed.
    #[error("transmittivity not measurable: {0}")]
    Unmeasurable(String),

    /// Too few samples, empty phase window, zero variance and similar.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Data taken at a fixed LO phase was passed to a phase-scanned estimator.
    #[error("samples are not phase-scanned: {0}")]
    NotPhaseScanned(String),

    #[error("degenerate regression: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
