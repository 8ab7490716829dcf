use std::fmt;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or malformed config.
    Usage(String),
    /// Every violation found while validating the config.
    Config(Vec<String>),
    /// Another process holds the output directory.
    Locked(String),
    /// A prerequisite artifact is missing; `command` builds it.
    Missing {
        what: String,
        command: &'static str,
    },
    Core(tokenwalk_core::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Locked(_) => EXIT_USAGE,
            CliError::Missing { .. } => EXIT_DATA,
            CliError::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Core(tokenwalk_core::Error::Config(_)) => EXIT_USAGE,
            CliError::Core(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Locked(m) => f.write_str(m),
            CliError::Config(problems) => {
                writeln!(f, "invalid configuration ({} problems):", problems.len())?;
                for p in problems {
                    writeln!(f, "  - {p}")?;
                }
                Ok(())
            }
            CliError::Missing { what, command } => {
                write!(
                    f,
                    "{what} is missing; run `tokenwalk {command} --config <config>` first"
                )
            }
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<tokenwalk_core::Error> for CliError {
    fn from(e: tokenwalk_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<tokenwalk_nn::NnError> for CliError {
    fn from(e: tokenwalk_nn::NnError) -> Self {
        CliError::Core(e.into())
    }
}

/// I/O failures on artifacts are data errors.
pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Core(tokenwalk_core::Error::io(path, e))
}
