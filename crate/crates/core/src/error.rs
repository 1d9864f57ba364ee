use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    /// A dataset or type invariant is violated. The message names the constraint.
    #[error("validation error: {0}")]
    Validation(String),

    /// A regime inequality required before a lemma is tested does not hold.
    #[error("regime gate failed: {0}")]
    Gate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input (configuration, validation or
    /// gate failures) rather than by the environment.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Gate(_)
                | Error::Config(_)
                | Error::Domain(_)
                | Error::Size(_)
                | Error::Index { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
