use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("coarsening factor {factor} does not divide {n_steps} steps")]
    NonDivisibleFactor { factor: usize, n_steps: usize },

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("noise was generated with lambda={noise} but params carry lambda={params}")]
    IntensityMismatch { noise: f64, params: f64 },

    #[error("every path in the ensemble overflowed")]
    AllPathsOverflowed,

    #[error("malformed binary dump: {0}")]
    Format(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> SimError {
    SimError::InvalidParam {
        field,
        reason: reason.into(),
    }
}
