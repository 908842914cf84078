use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },

    #[error("non-finite loss term `{0}`")]
    NonFiniteLoss(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("bad format: {0}")]
    BadFormat(String),

    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u32),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("config error at line {line}: key `{key}`: {msg}")]
    Config { line: usize, key: String, msg: String },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Dimension(_) => 2,
            Error::Config { .. } => 3,
            Error::MissingFile(_) => 4,
            Error::BadFormat(_) | Error::Truncated(_) | Error::VersionMismatch(_) => 5,
            Error::ArchitectureMismatch(_) => 6,
            Error::NonFinite { .. } | Error::NonFiniteLoss(_) => 7,
            Error::Degenerate(_) => 8,
            Error::Io(_) => 9,
        }
    }
}
