use bitflags::bitflags;

use super::crypto::{decrypt_block, encrypt_block, hash_string, HashKind};
use super::header::read_u32;

pub const ENTRY_SIZE: usize = 16;

/// Block index of a slot that has never been used. Lookups stop here.
pub const BLOCK_INDEX_EMPTY: u32 = 0xFFFF_FFFF;
/// Block index of a slot whose file was removed. Lookups continue past it.
pub const BLOCK_INDEX_DELETED: u32 = 0xFFFF_FFFE;

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
    pub struct BlockFlags: u32 {
        const IMPLODE = 0x0000_0100;
        const COMPRESS = 0x0000_0200;
        const ENCRYPTED = 0x0001_0000;
        const FIX_KEY = 0x0002_0000;
        const SINGLE_UNIT = 0x0100_0000;
        const DELETE_MARKER = 0x0200_0000;
        const SECTOR_CRC = 0x0400_0000;
        const EXISTS = 0x8000_0000;
        const _ = !0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashTableEntry {
    pub name_hash_a: u32,
    pub name_hash_b: u32,
    pub locale: u16,
    pub platform: u16,
    pub block_index: u32,
}

impl HashTableEntry {
    pub const EMPTY: Self = Self {
        name_hash_a: 0xFFFF_FFFF,
        name_hash_b: 0xFFFF_FFFF,
        locale: 0xFFFF,
        platform: 0xFFFF,
        block_index: BLOCK_INDEX_EMPTY,
    };

    pub fn is_empty(&self) -> bool {
        self.block_index == BLOCK_INDEX_EMPTY
    }

    pub fn is_deleted(&self) -> bool {
        self.block_index == BLOCK_INDEX_DELETED
    }

    fn parse(raw: &[u8]) -> Self {
        let locale_platform = read_u32(raw, 8).unwrap_or_default();
        Self {
            name_hash_a: read_u32(raw, 0).unwrap_or_default(),
            name_hash_b: read_u32(raw, 4).unwrap_or_default(),
            locale: (locale_platform & 0xFFFF) as u16,
            platform: (locale_platform >> 16) as u16,
            block_index: read_u32(raw, 12).unwrap_or_default(),
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.name_hash_a.to_le_bytes());
        out.extend_from_slice(&self.name_hash_b.to_le_bytes());
        out.extend_from_slice(&self.locale.to_le_bytes());
        out.extend_from_slice(&self.platform.to_le_bytes());
        out.extend_from_slice(&self.block_index.to_le_bytes());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockTableEntry {
    /// Relative to the start of the archive header.
    pub file_offset: u32,
    pub compressed_size: u32,
    pub uncompressed_size: u32,
    pub flags: BlockFlags,
}

impl BlockTableEntry {
    pub fn exists(&self) -> bool {
        self.flags.contains(BlockFlags::EXISTS)
    }

    fn parse(raw: &[u8]) -> Self {
        Self {
            file_offset: read_u32(raw, 0).unwrap_or_default(),
            compressed_size: read_u32(raw, 4).unwrap_or_default(),
            uncompressed_size: read_u32(raw, 8).unwrap_or_default(),
            flags: BlockFlags::from_bits_retain(read_u32(raw, 12).unwrap_or_default()),
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.file_offset.to_le_bytes());
        out.extend_from_slice(&self.compressed_size.to_le_bytes());
        out.extend_from_slice(&self.uncompressed_size.to_le_bytes());
        out.extend_from_slice(&self.flags.bits().to_le_bytes());
    }
}

pub(crate) fn hash_table_key() -> u32 {
    hash_string("(hash table)", HashKind::FileKey)
}

pub(crate) fn block_table_key() -> u32 {
    hash_string("(block table)", HashKind::FileKey)
}

/// `raw` must hold exactly `count * ENTRY_SIZE` encrypted bytes.
pub(crate) fn decode_hash_table(raw: &[u8]) -> Vec<HashTableEntry> {
    let mut buf = raw.to_vec();
    decrypt_block(&mut buf, hash_table_key());
    buf.chunks_exact(ENTRY_SIZE)
        .map(HashTableEntry::parse)
        .collect()
}

pub(crate) fn decode_block_table(raw: &[u8]) -> Vec<BlockTableEntry> {
    let mut buf = raw.to_vec();
    decrypt_block(&mut buf, block_table_key());
    buf.chunks_exact(ENTRY_SIZE)
        .map(BlockTableEntry::parse)
        .collect()
}

pub(crate) fn encode_hash_table(entries: &[HashTableEntry]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(entries.len() * ENTRY_SIZE);
    entries.iter().for_each(|e| e.write(&mut buf));
    encrypt_block(&mut buf, hash_table_key());
    buf
}

pub(crate) fn encode_block_table(entries: &[BlockTableEntry]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(entries.len() * ENTRY_SIZE);
    entries.iter().for_each(|e| e.write(&mut buf));
    encrypt_block(&mut buf, block_table_key());
    buf
}
