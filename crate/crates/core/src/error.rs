//! Crate-wide error type.
//!
//! Shape/contract violations in the math kernels panic (they are programmer
//! errors); everything that can be triggered by user input — configs, files,
//! diverging runs — is reported through [`Error`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or combination.
    #[error("configuration error: {0}")]
    Config(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    /// Malformed or inconsistent dataset file.
    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Serialization / deserialization failure (JSON, TOML, checkpoint).
    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
