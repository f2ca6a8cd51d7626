use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A basis term was evaluated outside its domain (e.g. `t <= -tau` for a log term).
    #[error("domain violation: {0}")]
    Domain(String),

    /// A nonlinear parameter is missing or outside its bounds.
    #[error("parameter out of bounds: {0}")]
    Parameter(String),

    /// The design matrix is numerically rank deficient.
    #[error("degenerate design (condition estimate {condition:.3e})")]
    DegenerateDesign { condition: f64 },

    /// An operation was attempted in the wrong tracker phase.
    #[error("invalid state: {0}")]
    State(String),

    /// Samples arrived out of time order.
    #[error("non-monotonic time: {t} does not follow {last}")]
    Ordering { t: f64, last: f64 },

    /// Malformed input file or document.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
            _ => Error::Format(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.to_string())
        } else {
            Error::Format(e.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
