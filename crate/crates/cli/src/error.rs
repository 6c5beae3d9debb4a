use idstack_core::{DocumentError, ExtractionError, PkiError, ScoringError, StoreError, ValidationError};
use thiserror::Error;

/// Exit 1 for IO or argument problems, 2 for domain validation errors.
/// Verification failure (exit 3) is reported through a successful outcome.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Domain(_) => 2,
        }
    }
}

impl From<ExtractionError> for CliError {
    fn from(err: ExtractionError) -> Self {
        match err {
            ExtractionError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<ValidationError> for CliError {
    fn from(err: ValidationError) -> Self {
        CliError::Domain(err.to_string())
    }
}

impl From<DocumentError> for CliError {
    fn from(err: DocumentError) -> Self {
        CliError::Domain(err.to_string())
    }
}

impl From<PkiError> for CliError {
    fn from(err: PkiError) -> Self {
        match err {
            PkiError::Io(e) => CliError::Io(e.to_string()),
            PkiError::InvalidArgument(m) => CliError::Usage(m),
            PkiError::Format(m) => CliError::Domain(m),
        }
    }
}

impl From<ScoringError> for CliError {
    fn from(err: ScoringError) -> Self {
        match err {
            ScoringError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(err: StoreError) -> Self {
        match err {
            StoreError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}
