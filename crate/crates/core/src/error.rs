use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A point lies outside the torus fundamental domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numeric argument is out of its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A structural invariant of an input is violated.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// The model configuration cannot be simulated or analysed as requested.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// A numerical procedure failed to converge.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An estimator was called on an unusable sample.
    #[error("state error: {0}")]
    State(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
