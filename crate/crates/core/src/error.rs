use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A fit or estimator could not produce a meaningful answer.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The Crank-Nicolson iteration blew up.
    #[error("PDE solver unstable at step {step} (ds/dx^2 = {ratio:.3e})")]
    Instability { step: usize, ratio: f64 },

    /// Splitting lost every member of the population at a level.
    #[error("population extinct at radius level {level} after {attempts} attempts")]
    Extinction { level: usize, attempts: usize },

    /// A result file did not match the declared schema.
    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
