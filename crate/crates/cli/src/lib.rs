//! Library half of the `sdn` command-line tool: configuration parsing and
//! CSV emission, shared with the integration tests.

use std::fmt;

pub mod config;
pub mod output;

/// Failures split by exit code: usage errors exit 1, runtime failures
/// exit 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sdn_core::SdnError> for CliError {
    fn from(e: sdn_core::SdnError) -> Self {
        CliError::Runtime(e.to_string())
    }
}
