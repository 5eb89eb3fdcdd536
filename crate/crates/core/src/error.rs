use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, inconsistent or out of range.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    /// An argument lies outside the domain of an operation (arc position, lane index, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A vector or action layout does not have the expected arity.
    #[error("layout error: {what} expects {expected} entries, got {got}")]
    Layout {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A policy produced an unusable action or failed. `step` counts
    /// controlled steps from 0.
    #[error("policy error at step {step}: {message}")]
    Policy { step: usize, message: String },

    #[error("episode is finished; call reset")]
    EpisodeDone,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
