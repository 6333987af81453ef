use std::fmt;

/// Failure classes with their process exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "invalid configuration: {}", m),
            Self::Numerical(m) => write!(f, "numerical failure: {}", m),
            Self::Io(m) => write!(f, "I/O error: {}", m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<nlwave_core::Error> for CliError {
    fn from(e: nlwave_core::Error) -> Self {
        use nlwave_core::Error as E;
        match e {
            E::InvalidConfig(_) | E::StepSize(_) => Self::Validation(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}
