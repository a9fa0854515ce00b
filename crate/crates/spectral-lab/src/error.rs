//! Error type shared across the lab.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateTail(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("unknown recipe `{name}`; available: {available}")]
    UnknownRecipe { name: String, available: String },

    #[error("unknown grid key `{key}`; valid keys: {valid}")]
    UnknownGridKey { key: String, valid: String },

    #[error("LAPACK routine {routine} failed with info={info}")]
    Lapack { routine: &'static str, info: i32 },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    ConfigParse(String),
}

impl Error {
    /// Process exit code for the CLI: 1 for validation problems the caller
    /// can fix, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig { .. }
            | Error::UnknownRecipe { .. }
            | Error::UnknownGridKey { .. }
            | Error::ConfigParse(_)
            | Error::InvalidDimension(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
