use std::fmt;

/// Exit code 1 covers validation and numerical failures, 2 covers anything
/// that went wrong reading or writing files.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Compute(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Compute(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hgesi::Error> for CliError {
    fn from(e: hgesi::Error) -> Self {
        match e {
            hgesi::Error::Io { .. } | hgesi::Error::Parse { .. } => CliError::Io(e.to_string()),
            hgesi::Error::InvalidArgument(_) => CliError::Validation(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}
