//! Command errors tagged with the module and operation that produced
//! them, mapped onto the process exit codes.

use thiserror::Error;

/// Exit code 2 for usage/configuration problems the user can fix by
/// changing inputs, exit code 1 for failures inside the pipeline.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{module}/{operation}: {cause}")]
    Usage {
        module: String,
        operation: String,
        cause: String,
    },
    #[error("{module}/{operation}: {cause}")]
    Runtime {
        module: String,
        operation: String,
        cause: String,
    },
}

impl CliError {
    pub fn usage(
        module: impl Into<String>,
        operation: impl Into<String>,
        cause: impl Into<String>,
    ) -> CliError {
        CliError::Usage {
            module: module.into(),
            operation: operation.into(),
            cause: cause.into(),
        }
    }

    pub fn runtime(
        module: impl Into<String>,
        operation: impl Into<String>,
        cause: impl Into<String>,
    ) -> CliError {
        CliError::Runtime {
            module: module.into(),
            operation: operation.into(),
            cause: cause.into(),
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage { .. } => 2,
            CliError::Runtime { .. } => 1,
        }
    }

    pub fn parts(&self) -> (&str, &str, &str) {
        match self {
            CliError::Usage {
                module,
                operation,
                cause,
            }
            | CliError::Runtime {
                module,
                operation,
                cause,
            } => (module, operation, cause),
        }
    }
}
