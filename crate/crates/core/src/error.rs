use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is out of its admissible range.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    /// A numerical routine failed to reach its tolerance.
    #[error("numeric failure in {routine}: {detail}")]
    Numeric { routine: &'static str, detail: String },

    /// A configured resource cap (event count, memory guard) was hit.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// The hypotheses of a comparison result do not hold for the given inputs.
    #[error("precondition {condition} violated: {detail}")]
    Precondition { condition: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn numeric(routine: &'static str, detail: impl Into<String>) -> Self {
        Error::Numeric {
            routine,
            detail: detail.into(),
        }
    }

    /// Prefixes the field path of a validation error, e.g. `service` + `params.rate`.
    pub fn within(self, parent: &str) -> Self {
        match self {
            Error::Validation { field, reason } => Error::Validation {
                field: format!("{parent}.{field}"),
                reason,
            },
            other => other,
        }
    }
}
