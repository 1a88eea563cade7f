use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("signal is empty")]
    EmptySignal,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input matrix has no positive entry")]
    EmptyInput,
    #[error("spectrum has zero total energy")]
    ZeroEnergy,
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("language-model backend unreachable: {0}")]
    BackendUnreachable(String),
}

impl Error {
    /// Stable variant name, printed by the CLI on failure.
    pub fn name(&self) -> &'static str {
        match self {
            Error::FileNotFound(_) => "FileNotFound",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::CorruptHeader(_) => "CorruptHeader",
            Error::Io(_) => "IoError",
            Error::EmptySignal => "EmptySignal",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::EmptyInput => "EmptyInput",
            Error::ZeroEnergy => "ZeroEnergy",
            Error::InvalidParams(_) => "InvalidParams",
            Error::SampleRateMismatch(..) => "SampleRateMismatch",
            Error::BackendUnreachable(_) => "BackendUnreachable",
        }
    }
}
