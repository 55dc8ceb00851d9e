use std::fmt;

use trimode::ErrorCategory;

/// Failure of a command, classified by the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration (exit 2).
    Config(String),
    /// Unusable input data or parameters (exit 3).
    Data(String),
    /// A numerical routine failed or a self-check did not pass (exit 4).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    /// Wraps a library error, echoing the context it occurred in.
    pub fn from_core(e: trimode::Error, context: impl fmt::Display) -> Self {
        let msg = format!("{e} ({context})");
        match e.category() {
            ErrorCategory::Data => CliError::Data(msg),
            ErrorCategory::Numeric => CliError::Numeric(msg),
        }
    }

    pub fn io(e: std::io::Error, path: &std::path::Path) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// `result.ctx("...")` shorthand for library calls.
pub trait Context<T> {
    fn ctx(self, context: impl fmt::Display) -> CliResult<T>;
}

impl<T> Context<T> for trimode::Result<T> {
    fn ctx(self, context: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::from_core(e, context))
    }
}
