use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of a model.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration value that cannot be simulated.
    #[error("config error: {0}")]
    Config(String),
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("unknown vehicle id {0}")]
    UnknownVehicle(u32),
    #[error("log error: {0}")]
    Log(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
