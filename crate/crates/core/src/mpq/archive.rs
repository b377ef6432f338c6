use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use flate2::read::ZlibDecoder;

use super::crypto::{decrypt_block, hash_string, HashKind};
use super::header::{read_u32, ArchiveHeader, UserDataHeader, USER_DATA_MAGIC};
use super::tables::{
    decode_block_table, decode_hash_table, BlockFlags, BlockTableEntry, HashTableEntry, ENTRY_SIZE,
};
use super::MpqError;

pub const LISTFILE: &str = "(listfile)";

/// Sector compression mask values (first byte of a compressed sector).
pub(crate) const COMPRESSION_ZLIB: u8 = 0x02;
pub(crate) const COMPRESSION_BZIP2: u8 = 0x10;

/// A parsed archive. Immutable after [`MpqArchive::open`], so it can be
/// shared between threads freely.
#[derive(Debug, Clone)]
pub struct MpqArchive {
    data: Vec<u8>,
    archive_offset: usize,
    user_data: Option<UserDataHeader>,
    header: ArchiveHeader,
    hash_table: Vec<HashTableEntry>,
    block_table: Vec<BlockTableEntry>,
}

fn table_bytes(data: &[u8], base: usize, offset: u32, count: u32) -> Result<&[u8], MpqError> {
    let start = base as u64 + offset as u64;
    let end = start + count as u64 * ENTRY_SIZE as u64;
    if end > data.len() as u64 {
        return Err(MpqError::Truncated("table exceeds file bounds"));
    }
    Ok(&data[start as usize..end as usize])
}

impl MpqArchive {
    pub fn open(data: Vec<u8>) -> Result<Self, MpqError> {
        let (user_data, archive_offset) = if data.get(..4) == Some(&USER_DATA_MAGIC[..]) {
            let user_data = UserDataHeader::parse(&data)?;
            let offset = user_data.archive_header_offset as usize;
            (Some(user_data), offset)
        } else {
            (None, 0)
        };

        let header = ArchiveHeader::parse(&data[archive_offset..])?;
        let hash_raw = table_bytes(
            &data,
            archive_offset,
            header.hash_table_offset,
            header.hash_table_count,
        )?;
        let block_raw = table_bytes(
            &data,
            archive_offset,
            header.block_table_offset,
            header.block_table_count,
        )?;
        let hash_table = decode_hash_table(hash_raw);
        let block_table = decode_block_table(block_raw);

        for (index, block) in block_table.iter().enumerate() {
            if !block.exists() {
                continue;
            }
            let end =
                archive_offset as u64 + block.file_offset as u64 + block.compressed_size as u64;
            if end > data.len() as u64 {
                return Err(MpqError::Truncated("block data exceeds file bounds"));
            }
            let compressed = block
                .flags
                .intersects(BlockFlags::COMPRESS | BlockFlags::IMPLODE);
            if !compressed && block.compressed_size != block.uncompressed_size {
                return Err(MpqError::CorruptSector(format!(
                    "block {index} is uncompressed but sizes differ"
                )));
            }
        }
        for entry in &hash_table {
            if !entry.is_empty()
                && !entry.is_deleted()
                && entry.block_index as usize >= block_table.len()
            {
                return Err(MpqError::Truncated(
                    "hash entry points past the block table",
                ));
            }
        }

        Ok(Self {
            data,
            archive_offset,
            user_data,
            header,
            hash_table,
            block_table,
        })
    }

    pub fn open_path(path: impl AsRef<Path>) -> Result<Self, MpqError> {
        Self::open(std::fs::read(path)?)
    }

    pub fn header(&self) -> &ArchiveHeader {
        &self.header
    }

    pub fn user_data(&self) -> Option<&UserDataHeader> {
        self.user_data.as_ref()
    }

    pub fn hash_table(&self) -> &[HashTableEntry] {
        &self.hash_table
    }

    pub fn block_table(&self) -> &[BlockTableEntry] {
        &self.block_table
    }

    fn find_block(&self, name: &str) -> Option<&BlockTableEntry> {
        let size = self.hash_table.len();
        if size == 0 {
            return None;
        }
        let start = hash_string(name, HashKind::TableIndex) as usize & (size - 1);
        let name_a = hash_string(name, HashKind::NameA);
        let name_b = hash_string(name, HashKind::NameB);

        for probe in 0..size {
            let entry = &self.hash_table[(start + probe) & (size - 1)];
            if entry.is_empty() {
                return None;
            }
            if entry.is_deleted() {
                continue;
            }
            if entry.name_hash_a == name_a && entry.name_hash_b == name_b {
                return self.block_table.get(entry.block_index as usize);
            }
        }
        None
    }

    pub fn contains(&self, name: &str) -> bool {
        self.find_block(name).is_some_and(BlockTableEntry::exists)
    }

    /// Read a member by name, decrypting and decompressing as needed.
    pub fn extract(&self, name: &str) -> Result<Vec<u8>, MpqError> {
        let block = self
            .find_block(name)
            .filter(|b| b.exists())
            .ok_or_else(|| MpqError::NotFound(name.to_string()))?;

        let start = self.archive_offset + block.file_offset as usize;
        let raw = &self.data[start..start + block.compressed_size as usize];
        let size = block.uncompressed_size as usize;
        if size == 0 {
            return Ok(Vec::new());
        }

        let key = block
            .flags
            .contains(BlockFlags::ENCRYPTED)
            .then(|| file_key(name, block));
        if block.flags.contains(BlockFlags::IMPLODE) {
            return Err(MpqError::UnsupportedCompression(0x08));
        }
        let compressed = block.flags.contains(BlockFlags::COMPRESS);

        if block.flags.contains(BlockFlags::SINGLE_UNIT) {
            let mut buf = raw.to_vec();
            if let Some(key) = key {
                decrypt_block(&mut buf, key);
            }
            return if compressed && buf.len() < size {
                decompress_sector(&buf, size)
            } else if buf.len() == size {
                Ok(buf)
            } else {
                Err(MpqError::CorruptSector(format!(
                    "{name}: stored {} bytes, expected {size}",
                    buf.len()
                )))
            };
        }

        self.read_sectors(name, raw, size, compressed, block.flags, key)
    }

    fn read_sectors(
        &self,
        name: &str,
        raw: &[u8],
        size: usize,
        compressed: bool,
        flags: BlockFlags,
        key: Option<u32>,
    ) -> Result<Vec<u8>, MpqError> {
        let sector_size = self.header.sector_size();
        let sector_count = size.div_ceil(sector_size);
        let mut out = Vec::with_capacity(size.min(raw.len()));

        if !compressed {
            for (index, chunk) in raw.chunks(sector_size).enumerate() {
                let mut sector = chunk.to_vec();
                if let Some(key) = key {
                    decrypt_block(&mut sector, key.wrapping_add(index as u32));
                }
                out.extend_from_slice(&sector);
            }
            return Ok(out);
        }

        let mut entries = sector_count + 1;
        if flags.contains(BlockFlags::SECTOR_CRC) {
            entries += 1;
        }
        let table_len = entries * 4;
        let mut table = raw
            .get(..table_len)
            .ok_or_else(|| MpqError::CorruptSector(format!("{name}: sector table truncated")))?
            .to_vec();
        if let Some(key) = key {
            decrypt_block(&mut table, key.wrapping_sub(1));
        }
        let offsets: Vec<usize> = (0..=sector_count)
            .map(|i| read_u32(&table, i * 4).unwrap_or_default() as usize)
            .collect();

        for index in 0..sector_count {
            let (from, to) = (offsets[index], offsets[index + 1]);
            if from > to || to > raw.len() {
                return Err(MpqError::CorruptSector(format!(
                    "{name}: bad sector offsets"
                )));
            }
            let mut sector = raw[from..to].to_vec();
            if let Some(key) = key {
                decrypt_block(&mut sector, key.wrapping_add(index as u32));
            }
            let expected = sector_size.min(size - index * sector_size);
            if sector.len() < expected {
                out.extend(decompress_sector(&sector, expected)?);
            } else if sector.len() == expected {
                out.extend_from_slice(&sector);
            } else {
                return Err(MpqError::CorruptSector(format!(
                    "{name}: oversized sector {index}"
                )));
            }
        }
        Ok(out)
    }

    /// Names from the `(listfile)` member, deduplicated and sorted.
    pub fn list_files(&self) -> Result<Vec<String>, MpqError> {
        let raw = self.extract(LISTFILE)?;
        let text = String::from_utf8_lossy(&raw);
        let names: BTreeSet<String> = text
            .split(['\n', ';'])
            .map(|line| line.trim_end_matches('\r'))
            .filter(|line| !line.is_empty())
            .map(str::to_string)
            .collect();
        Ok(names.into_iter().collect())
    }
}

fn file_key(name: &str, block: &BlockTableEntry) -> u32 {
    let base = name.rsplit(['\\', '/']).next().unwrap_or(name);
    let key = hash_string(base, HashKind::FileKey);
    if block.flags.contains(BlockFlags::FIX_KEY) {
        key.wrapping_add(block.file_offset) ^ block.uncompressed_size
    } else {
        key
    }
}

pub(crate) fn file_key_for(name: &str) -> u32 {
    let base = name.rsplit(['\\', '/']).next().unwrap_or(name);
    hash_string(base, HashKind::FileKey)
}

fn decompress_sector(sector: &[u8], expected: usize) -> Result<Vec<u8>, MpqError> {
    let (&method, payload) = sector
        .split_first()
        .ok_or_else(|| MpqError::CorruptSector("empty compressed sector".into()))?;
    match method {
        COMPRESSION_ZLIB => {
            let mut out = Vec::with_capacity(expected.min(1 << 20));
            ZlibDecoder::new(payload)
                .take(expected as u64 + 1)
                .read_to_end(&mut out)
                .map_err(|e| MpqError::CorruptSector(format!("deflate: {e}")))?;
            if out.len() != expected {
                return Err(MpqError::CorruptSector(format!(
                    "decompressed {} bytes, expected {expected}",
                    out.len()
                )));
            }
            Ok(out)
        }
        COMPRESSION_BZIP2 => Err(MpqError::UnsupportedCompression(COMPRESSION_BZIP2)),
        other => Err(MpqError::UnsupportedCompression(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bzip2_sector_is_unsupported() {
        let err = decompress_sector(&[COMPRESSION_BZIP2, 1, 2, 3], 10).unwrap_err();
        assert!(matches!(err, MpqError::UnsupportedCompression(0x10)));
    }

    #[test]
    fn garbage_deflate_is_corrupt() {
        let err = decompress_sector(&[COMPRESSION_ZLIB, 0xde, 0xad], 10).unwrap_err();
        assert!(matches!(err, MpqError::CorruptSector(_)));
    }

    #[test]
    fn fix_key_adjusts_key() {
        let block = BlockTableEntry {
            file_offset: 0x20,
            compressed_size: 8,
            uncompressed_size: 8,
            flags: BlockFlags::EXISTS | BlockFlags::ENCRYPTED | BlockFlags::FIX_KEY,
        };
        let plain = file_key_for("dir\\name.txt");
        assert_eq!(plain, hash_string("name.txt", HashKind::FileKey));
        assert_eq!(
            file_key("dir\\name.txt", &block),
            plain.wrapping_add(0x20) ^ 8
        );
    }
}
