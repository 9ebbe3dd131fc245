use std::fmt;

use lumina::error::{CheckpointError, ConfigError, DataError, Error};

/// Process exit codes.
pub mod code {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const MODEL: i32 = 4;
    /// Evaluation found no image names common to both directories.
    pub const NOTHING_SCORED: i32 = 5;
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config; the subcommand help is printed when `help` is set.
    Usage { message: String, help: bool },
    Data(String),
    Model(String),
    NothingScored(String),
    Other(String),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self::Usage { message: message.into(), help: false }
    }

    pub fn missing(key: &str) -> Self {
        Self::Usage { message: format!("missing required `--{}`", key.replace('_', "-")), help: true }
    }

    pub fn code(&self) -> i32 {
        match self {
            Self::Usage { .. } => code::USAGE,
            Self::Data(_) => code::DATA,
            Self::Model(_) => code::MODEL,
            Self::NothingScored(_) => code::NOTHING_SCORED,
            Self::Other(_) => code::OTHER,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage { message, .. } => write!(f, "usage error: {message}"),
            Self::Data(m) => write!(f, "data error: {m}"),
            Self::Model(m) => write!(f, "model error: {m}"),
            Self::NothingScored(m) => write!(f, "{m}"),
            Self::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        Self::Model(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(c) => c.into(),
            Error::Data(d) => d.into(),
            Error::Checkpoint(c) => c.into(),
            other => Self::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}
