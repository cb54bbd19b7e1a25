use std::fmt;

/// A failed run, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Input data failed validation (exit 1).
    Validation(String),
    /// Bad flag, config key or value (exit 2).
    BadArgs(String),
    /// Anything else (exit 3).
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::BadArgs(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::BadArgs(m) => write!(f, "bad arguments: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<toonface::Error> for CliError {
    fn from(e: toonface::Error) -> Self {
        use toonface::Error as E;
        match e {
            E::Io(_) | E::NotRecorded | E::MissingGradients(_) | E::DuplicateParameter(_) => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

/// Treats a library error as a problem with the supplied arguments.
pub fn bad_args<T>(r: toonface::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::BadArgs(e.to_string()))
}

pub type CliResult<T> = Result<T, CliError>;
