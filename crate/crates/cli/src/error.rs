use ajsim_core::SimError;
use thiserror::Error;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or unreadable configuration, reported with a dotted field path.
    #[error("{path}: {message}")]
    Config { path: String, message: String },

    /// Failure after simulation started.
    #[error("run aborted: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    /// Maps a core error raised while checking the section `section`.
    pub fn from_sim(section: &str, e: SimError) -> Self {
        match e {
            SimError::InvalidParam { field, reason } => {
                CliError::config(format!("{section}.{field}"), reason)
            }
            SimError::NonDivisibleFactor { .. } => CliError::config(section, e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
