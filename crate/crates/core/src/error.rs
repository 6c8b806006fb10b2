use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs that cannot be combined, e.g. videos annotated with different vocabularies.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller-supplied argument is out of range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Malformed input document.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// A well-formed document whose contents break annotation invariants.
    #[error("validation failed with {} violation(s):\n{}", .0.len(), .0.join("\n"))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
