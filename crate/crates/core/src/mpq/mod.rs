//! MoPAQ archive reading, plus a writer for test fixtures.
//!
//! Only the original (version 1) layout is supported: a 32-byte archive
//! header, optionally preceded by a user-data block, with encrypted hash and
//! block tables. Members may be single-unit or split into sectors, stored raw
//! or zlib-compressed, and optionally encrypted. All integers are little-endian.

mod archive;
mod builder;
mod crypto;
mod header;
mod tables;

use thiserror::Error;

pub use archive::{MpqArchive, LISTFILE};
pub use builder::{build_archive, ArchiveBuilder, BuildOptions};
pub use crypto::{decrypt_block, encrypt_block, hash_string, normalize_name, HashKind};
pub use header::{ArchiveHeader, UserDataHeader, ARCHIVE_MAGIC, USER_DATA_MAGIC};
pub use tables::{
    BlockFlags, BlockTableEntry, HashTableEntry, BLOCK_INDEX_DELETED, BLOCK_INDEX_EMPTY,
};

#[derive(Debug, Error)]
pub enum MpqError {
    #[error("not an MPQ archive")]
    BadMagic,
    #[error("unsupported MPQ format version {0}")]
    BadVersion(u16),
    #[error("archive truncated: {0}")]
    Truncated(&'static str),
    #[error("hash table size {0} is not a power of two")]
    BadTableSize(u32),
    #[error("file not found in archive: {0}")]
    NotFound(String),
    #[error("unsupported compression method 0x{0:02x}")]
    UnsupportedCompression(u8),
    #[error("corrupt sector: {0}")]
    CorruptSector(String),
    #[error("name collides with an existing member: {0}")]
    NameCollision(String),
    #[error("invalid member name {0:?}")]
    InvalidName(String),
    #[error("archive exceeds 4 GiB")]
    TooLarge,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MpqError {
    /// Stable variant name, used in failure logs.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::BadMagic => "BadMagic",
            Self::BadVersion(_) => "BadVersion",
            Self::Truncated(_) => "Truncated",
            Self::BadTableSize(_) => "BadTableSize",
            Self::NotFound(_) => "NotFound",
            Self::UnsupportedCompression(_) => "UnsupportedCompression",
            Self::CorruptSector(_) => "CorruptSector",
            Self::NameCollision(_) => "NameCollision",
            Self::InvalidName(_) => "InvalidName",
            Self::TooLarge => "TooLarge",
            Self::Io(_) => "Io",
        }
    }
}
