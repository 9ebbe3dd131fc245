use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: dimension error: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("{op}: geometry error: {detail}")]
    Geometry { op: &'static str, detail: String },
    #[error("contract error: {0}")]
    Contract(String),
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint manifest mismatch at `{path}`: {detail}")]
    Manifest { path: String, detail: String },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: cannot decode image: {detail}")]
    Decode { path: PathBuf, detail: String },
    #[error("{path}: cannot encode image: {detail}")]
    Encode { path: PathBuf, detail: String },
    #[error("no valid training pairs under {0}")]
    NoPairs(PathBuf),
    #[error("no usable base images: {0}")]
    NoBaseImages(String),
}

/// Error for whole-pipeline operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("non-finite gradient in parameter `{path}` at step {step}")]
    NanGradient { path: String, step: usize },
    #[error("non-finite loss at step {step}")]
    NanLoss { step: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
