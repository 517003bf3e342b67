use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("{measure} requires a {required} representation")]
    IncompatibleRepresentation {
        measure: &'static str,
        required: &'static str,
    },

    #[error("timestamp {got} does not follow previous timestamp {previous}")]
    NonMonotoneTimestamp { previous: i64, got: i64 },

    #[error("non-finite value at timestamp {timestamp}")]
    NonFinite { timestamp: i64 },

    /// The reference group (or score set) is too small for the operation.
    #[error("degenerate reference group: {0}")]
    DegenerateGroup(String),

    #[error("index inconsistency: {0}")]
    Consistency(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("at timestamp {timestamp}: {source}")]
    AtTimestamp {
        timestamp: i64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
