use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised while reading or writing the binary dataset and model files.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    MagicMismatch { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u16, found: u16 },
    #[error("file truncated inside the header")]
    TruncatedHeader,
    #[error("file truncated inside record {index}")]
    TruncatedRecord { index: u64 },
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("record {index} carries unknown origin tag {tag}")]
    InvalidOrigin { index: u64, tag: u8 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("position ({x}, {y}) lies outside the room")]
    OutsideRoom { x: f64, y: f64 },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("degenerate channel power: r[0] = {0}")]
    DegeneratePower(f64),
    #[error("sample has zero energy")]
    ZeroEnergy,
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 = configuration error, 3 = data error, 4 = numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::Parse { .. } => 2,
            Error::InvalidDimension(_)
            | Error::OutsideRoom { .. }
            | Error::Empty(_)
            | Error::ZeroEnergy
            | Error::Format(_)
            | Error::Io { .. } => 3,
            Error::DegeneratePower(_) | Error::Numeric(_) => 4,
        }
    }
}
