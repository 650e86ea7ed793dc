use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest: {0}")]
    ManifestFormat(String),

    #[error("malformed ranking file: {0}")]
    RankingFormat(String),

    #[error("embeddings: bad magic {0:02x?}, expected \"CSEM\"")]
    BadMagic([u8; 4]),

    #[error("embeddings: unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("embeddings: truncated payload, expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("embeddings: header declares {expected} ids, found {found}")]
    IdCountMismatch { expected: usize, found: usize },

    #[error("embeddings: {0} trailing bytes after id list")]
    TrailingBytes(usize),

    #[error("embeddings: tile id list is not valid UTF-8")]
    InvalidUtf8,

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("mask {path}: value {value} at (row {row}, col {col}) is not a valid class")]
    MaskValue {
        path: PathBuf,
        row: u32,
        col: u32,
        value: u16,
    },

    #[error("unsupported mask encoding in {path}: {reason}")]
    MaskEncoding { path: PathBuf, reason: String },

    #[error("image {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("no pairs found")]
    NoPairs,

    #[error("unpaired input: {0}")]
    Unpaired(PathBuf),

    #[error("dimension mismatch for {stem}: image {image:?}, mask {mask:?}")]
    DimensionMismatch {
        stem: String,
        image: (u32, u32),
        mask: (u32, u32),
    },

    #[error("tile id sets differ: {0}")]
    IdMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by unreadable or malformed input files, as opposed
    /// to parameter or consistency failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::ManifestFormat(_)
                | Error::RankingFormat(_)
                | Error::BadMagic(_)
                | Error::UnsupportedVersion(_)
                | Error::Truncated { .. }
                | Error::IdCountMismatch { .. }
                | Error::TrailingBytes(_)
                | Error::InvalidUtf8
                | Error::Image { .. }
                | Error::MaskEncoding { .. }
                | Error::NoPairs
                | Error::Unpaired(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
