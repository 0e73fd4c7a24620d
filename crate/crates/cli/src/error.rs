use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A self-checking experiment found a violation.
    #[error("check failed: {0}")]
    Check(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Numeric(_) => 3,
            CliError::Check(_) => 4,
            CliError::Io { .. } | CliError::Other(_) => 1,
        }
    }
}

impl From<hwlab::Error> for CliError {
    fn from(e: hwlab::Error) -> Self {
        match e {
            hwlab::Error::Validation { field, reason } => CliError::Validation { field, reason },
            hwlab::Error::Precondition { .. } => CliError::validation("config", e.to_string()),
            hwlab::Error::Numeric { .. } | hwlab::Error::Resource(_) => CliError::Numeric(e.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
