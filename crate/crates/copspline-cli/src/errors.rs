use std::fmt;

/// CLI failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed input files (CSV, JSON) or I/O failures. Exit code 2.
    Parse(String),
    /// Invalid or inconsistent configuration. Exit code 3.
    Config(String),
    /// Numeric failure during fitting or evaluation. Exit code 4.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Config(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<copspline::Error> for CliError {
    fn from(e: copspline::Error) -> Self {
        use copspline::Error as E;
        match e {
            E::Solver(_) | E::Evaluation(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
