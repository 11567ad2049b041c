//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Parameter outside its admissible set.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent or unreadable configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Array shapes or grids that do not conform.
    #[error("structural error: {0}")]
    Structural(String),
    /// Iterative method failed to converge or produced non-finite values.
    #[error("numerical error: {message}")]
    Numerical {
        message: String,
        /// Residual or iteration history, most recent last.
        history: Vec<f64>,
    },
    /// A least-squares fit could not be formed or failed its acceptance test.
    #[error("fit error: {0}")]
    Fit(String),
    /// The input violates the hypothesis of the requested computation.
    #[error("hypothesis error: {0}")]
    Hypothesis(String),
    /// Data window too narrow for the requested accuracy.
    #[error("truncation error: {0}")]
    Truncation(String),
    /// Fields vanish where a positive quantity is required.
    #[error("degenerate field: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical { message: message.into(), history: Vec::new() }
    }

    /// True for failures caused by user input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::Config(_) | Error::Hypothesis(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
