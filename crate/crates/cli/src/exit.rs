//! Stable exit codes and the CLI error type.

use std::fmt;

use diffpool_core::error::{CoreError, GraphError};

pub const BAD_CONFIG: u8 = 2;
pub const INGESTION: u8 = 3;
pub const INDEX: u8 = 4;
pub const GRADCHECK: u8 = 5;
pub const INTERNAL: u8 = 1;

#[derive(Debug)]
pub enum CliError {
    /// Unknown or malformed configuration key, flag, or value.
    BadConfig(String),
    /// Dataset files missing or unparseable.
    Ingestion(String),
    /// A requested graph index does not exist.
    IndexOutOfRange(String),
    /// The gradient check failed.
    GradCheck(String),
    /// Anything else.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::BadConfig(_) => BAD_CONFIG,
            CliError::Ingestion(_) => INGESTION,
            CliError::IndexOutOfRange(_) => INDEX,
            CliError::GradCheck(_) => GRADCHECK,
            CliError::Internal(_) => INTERNAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::BadConfig(m)
            | CliError::Ingestion(m)
            | CliError::IndexOutOfRange(m)
            | CliError::GradCheck(m)
            | CliError::Internal(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Graph(g) => g.into(),
            CoreError::Config(m) => CliError::BadConfig(m),
            CoreError::Tensor(t) => CliError::Internal(t.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Ingestion(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
