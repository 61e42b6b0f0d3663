use crate::model::{AuthorId, SongId};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate song id {0}")]
    DuplicateSong(SongId),

    #[error("duplicate event id {0}")]
    DuplicateEvent(u64),

    #[error("unknown song id {0}")]
    UnknownSong(SongId),

    #[error("unknown author id {0}")]
    UnknownAuthor(AuthorId),

    #[error("song {child} uploaded at {child_ts} not after parent {parent} at {parent_ts}")]
    NonMonotoneUpload { child: SongId, parent: SongId, child_ts: i64, parent_ts: i64 },

    #[error("song {0} is not an overdub")]
    NotAnOverdub(SongId),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
