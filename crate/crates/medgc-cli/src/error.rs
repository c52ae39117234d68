//! Process-level error type mapping every failure onto the documented exit
//! codes: 2 for usage problems, 3 for validation failures, 4 for numeric
//! failures.

use std::fmt;

use medgc::MedgcError;

/// A failed run, carrying the exit code the process must report.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation: unknown flag values, missing required settings, or
    /// paths that do not exist or cannot be touched (exit code 2).
    Usage(String),
    /// Inputs that violate the documented schema or record invariants, or
    /// configuration inconsistent with the inputs (exit code 3).
    Invalid(String),
    /// Numeric failure inside a fitting or simulation procedure (exit
    /// code 4).
    Numeric(String),
}

impl CliError {
    /// A usage failure (exit code 2).
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    /// A validation failure (exit code 3).
    pub fn invalid(message: impl Into<String>) -> Self {
        CliError::Invalid(message.into())
    }

    /// The process exit code this failure maps to.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Invalid(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Invalid(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<MedgcError> for CliError {
    fn from(error: MedgcError) -> Self {
        match &error {
            MedgcError::Numeric(_) => CliError::Numeric(error.to_string()),
            // I/O problems are invocation problems: the run pointed at a
            // path that cannot be read or written.
            MedgcError::Io(_) => CliError::Usage(error.to_string()),
            _ => CliError::Invalid(error.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(error: std::io::Error) -> Self {
        CliError::Usage(error.to_string())
    }
}
