use fracball::fieldspec::FieldError;
use fracball::Error;

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const PROPERTY_FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, parameters outside their ranges, or malformed expressions.
    #[error("{0}")]
    Config(String),

    #[error("expression error: {0}")]
    Field(FieldError),

    #[error("numerical failure: {0}")]
    Numerical(Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Classify a core error: input problems are configuration errors, the rest numerical.
    pub fn from_core(e: Error) -> Self {
        match e {
            Error::Field(f) => CliError::Field(f),
            Error::InvalidParams(_)
            | Error::DimensionMismatch { .. }
            | Error::Precondition(_)
            | Error::OutOfDomain(_)
            | Error::CoincidentPoints { .. } => CliError::Config(e.to_string()),
            other => CliError::Numerical(other),
        }
    }

    pub fn from_field(e: FieldError) -> Self {
        CliError::Field(e)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Field(_) => exit::USAGE,
            CliError::Numerical(_) | CliError::Io(_) => exit::NUMERICAL,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::from_core(e)
    }
}
