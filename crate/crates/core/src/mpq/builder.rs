use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;

use super::archive::{file_key_for, COMPRESSION_ZLIB, LISTFILE};
use super::crypto::{encrypt_block, hash_string, normalize_name, HashKind};
use super::header::{
    ArchiveHeader, UserDataHeader, ARCHIVE_HEADER_SIZE, FORMAT_VERSION_1, USER_DATA_HEADER_SIZE,
};
use super::tables::{
    encode_block_table, encode_hash_table, BlockFlags, BlockTableEntry, HashTableEntry,
};
use super::MpqError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    pub compress: bool,
    pub encrypt: bool,
}

/// Writes format-version-1 archives. Used to generate fixtures; the reader
/// is what real-world files go through.
#[derive(Debug, Clone)]
pub struct ArchiveBuilder {
    files: BTreeMap<String, Vec<u8>>,
    options: BuildOptions,
    user_data: Option<Vec<u8>>,
    sectored: bool,
    sector_size_shift: u16,
    listfile: Listfile,
}

#[derive(Debug, Clone)]
enum Listfile {
    Generated,
    Custom(String),
    Omitted,
}

impl Default for ArchiveBuilder {
    fn default() -> Self {
        Self::new(BuildOptions::default())
    }
}

impl ArchiveBuilder {
    pub fn new(options: BuildOptions) -> Self {
        Self {
            files: BTreeMap::new(),
            options,
            user_data: None,
            sectored: false,
            sector_size_shift: 3,
            listfile: Listfile::Generated,
        }
    }

    /// Prefix the archive with a user-data block holding `content`.
    pub fn user_data(mut self, content: Vec<u8>) -> Self {
        self.user_data = Some(content);
        self
    }

    /// Store members as multiple sectors instead of a single unit.
    pub fn sectored(mut self, sector_size_shift: u16) -> Self {
        self.sectored = true;
        self.sector_size_shift = sector_size_shift;
        self
    }

    /// Store `text` as the `(listfile)` instead of the generated one.
    pub fn listfile_contents(mut self, text: impl Into<String>) -> Self {
        self.listfile = Listfile::Custom(text.into());
        self
    }

    pub fn omit_listfile(mut self) -> Self {
        self.listfile = Listfile::Omitted;
        self
    }

    pub fn add_file(&mut self, name: impl Into<String>, data: Vec<u8>) -> Result<(), MpqError> {
        let name = name.into();
        if name.is_empty() || !name.is_ascii() {
            return Err(MpqError::InvalidName(name));
        }
        let normalized = normalize_name(&name);
        if normalize_name(LISTFILE) == normalized
            || self
                .files
                .keys()
                .any(|existing| normalize_name(existing) == normalized)
        {
            return Err(MpqError::NameCollision(name));
        }
        self.files.insert(name, data);
        Ok(())
    }

    pub fn build(self) -> Result<Vec<u8>, MpqError> {
        let listfile = match &self.listfile {
            Listfile::Generated => {
                Some(self.files.keys().map(|name| format!("{name}\n")).collect())
            }
            Listfile::Custom(text) => Some(text.clone()),
            Listfile::Omitted => None,
        };
        let mut members: Vec<(&str, &[u8])> = self
            .files
            .iter()
            .map(|(name, data)| (name.as_str(), data.as_slice()))
            .collect();
        if let Some(listfile) = &listfile {
            members.push((LISTFILE, listfile.as_bytes()));
        }

        let table_size = (members.len() * 2).next_power_of_two().max(4);
        let mut seen: HashMap<(u32, u32), &str> = HashMap::new();
        for (name, _) in &members {
            let key = (
                hash_string(name, HashKind::NameA),
                hash_string(name, HashKind::NameB),
            );
            if let Some(previous) = seen.insert(key, name) {
                return Err(MpqError::NameCollision(format!("{previous} / {name}")));
            }
        }

        let mut body = Vec::new();
        let mut blocks = Vec::with_capacity(members.len());
        let mut hash_table = vec![HashTableEntry::EMPTY; table_size];
        let sector_size = 512usize << self.sector_size_shift;

        for (index, (name, data)) in members.iter().enumerate() {
            let file_offset = ARCHIVE_HEADER_SIZE as usize + body.len();
            let key = self.options.encrypt.then(|| file_key_for(name));
            let stored = if self.sectored {
                self.encode_sectored(data, sector_size, key)?
            } else {
                self.encode_single_unit(data, key)?
            };

            let mut flags = BlockFlags::EXISTS;
            if self.options.compress {
                flags |= BlockFlags::COMPRESS;
            }
            if self.options.encrypt {
                flags |= BlockFlags::ENCRYPTED;
            }
            if !self.sectored {
                flags |= BlockFlags::SINGLE_UNIT;
            }
            blocks.push(BlockTableEntry {
                file_offset: to_u32(file_offset)?,
                compressed_size: to_u32(stored.len())?,
                uncompressed_size: to_u32(data.len())?,
                flags,
            });
            body.extend_from_slice(&stored);

            let mut slot = hash_string(name, HashKind::TableIndex) as usize & (table_size - 1);
            while !hash_table[slot].is_empty() {
                slot = (slot + 1) & (table_size - 1);
            }
            hash_table[slot] = HashTableEntry {
                name_hash_a: hash_string(name, HashKind::NameA),
                name_hash_b: hash_string(name, HashKind::NameB),
                locale: 0,
                platform: 0,
                block_index: index as u32,
            };
        }

        let hash_table_offset = ARCHIVE_HEADER_SIZE as usize + body.len();
        let block_table_offset = hash_table_offset + table_size * 16;
        let archive_size = block_table_offset + blocks.len() * 16;
        let header = ArchiveHeader {
            header_size: ARCHIVE_HEADER_SIZE,
            archive_size: to_u32(archive_size)?,
            format_version: FORMAT_VERSION_1,
            sector_size_shift: self.sector_size_shift,
            hash_table_offset: to_u32(hash_table_offset)?,
            block_table_offset: to_u32(block_table_offset)?,
            hash_table_count: table_size as u32,
            block_table_count: blocks.len() as u32,
        };

        let mut out = Vec::new();
        if let Some(content) = self.user_data {
            // The archive header is aligned to 512 bytes after the user data.
            let used = USER_DATA_HEADER_SIZE + content.len();
            let archive_offset = used.div_ceil(512).max(1) * 512;
            UserDataHeader {
                user_data_max_size: to_u32(archive_offset - USER_DATA_HEADER_SIZE)?,
                archive_header_offset: to_u32(archive_offset)?,
                content,
            }
            .write(&mut out);
            out.resize(archive_offset, 0);
        }
        header.write(&mut out);
        out.extend_from_slice(&body);
        out.extend_from_slice(&encode_hash_table(&hash_table));
        out.extend_from_slice(&encode_block_table(&blocks));
        Ok(out)
    }

    fn compress_unit(&self, data: &[u8]) -> Result<Vec<u8>, MpqError> {
        if !self.options.compress || data.is_empty() {
            return Ok(data.to_vec());
        }
        let mut encoder = ZlibEncoder::new(vec![COMPRESSION_ZLIB], Compression::default());
        encoder.write_all(data)?;
        let compressed = encoder.finish()?;
        // Units that do not shrink are stored raw; the reader tells them
        // apart by comparing sizes.
        Ok(if compressed.len() < data.len() {
            compressed
        } else {
            data.to_vec()
        })
    }

    fn encode_single_unit(&self, data: &[u8], key: Option<u32>) -> Result<Vec<u8>, MpqError> {
        let mut unit = self.compress_unit(data)?;
        if let Some(key) = key {
            encrypt_block(&mut unit, key);
        }
        Ok(unit)
    }

    fn encode_sectored(
        &self,
        data: &[u8],
        sector_size: usize,
        key: Option<u32>,
    ) -> Result<Vec<u8>, MpqError> {
        let mut sectors = Vec::new();
        for (index, chunk) in data.chunks(sector_size).enumerate() {
            let mut sector = self.compress_unit(chunk)?;
            if let Some(key) = key {
                encrypt_block(&mut sector, key.wrapping_add(index as u32));
            }
            sectors.push(sector);
        }
        if !self.options.compress {
            return Ok(sectors.concat());
        }

        let mut offsets = Vec::with_capacity(sectors.len() + 1);
        let mut position = (sectors.len() + 1) * 4;
        offsets.push(position as u32);
        for sector in &sectors {
            position += sector.len();
            offsets.push(to_u32(position)?);
        }
        let mut table: Vec<u8> = offsets.iter().flat_map(|o| o.to_le_bytes()).collect();
        if let Some(key) = key {
            encrypt_block(&mut table, key.wrapping_sub(1));
        }
        table.extend(sectors.concat());
        Ok(table)
    }
}

fn to_u32(value: usize) -> Result<u32, MpqError> {
    u32::try_from(value).map_err(|_| MpqError::TooLarge)
}

/// Build an archive from `files`, plus a generated `(listfile)`.
pub fn build_archive(
    files: &BTreeMap<String, Vec<u8>>,
    options: BuildOptions,
) -> Result<Vec<u8>, MpqError> {
    let mut builder = ArchiveBuilder::new(options);
    for (name, data) in files {
        builder.add_file(name.clone(), data.clone())?;
    }
    builder.build()
}
