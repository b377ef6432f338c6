use super::MpqError;

pub const ARCHIVE_MAGIC: [u8; 4] = *b"MPQ\x1A";
pub const USER_DATA_MAGIC: [u8; 4] = *b"MPQ\x1B";

/// On-disk `format_version` value of the original (version 1) format.
pub const FORMAT_VERSION_1: u16 = 0;

pub const ARCHIVE_HEADER_SIZE: u32 = 32;
pub const USER_DATA_HEADER_SIZE: usize = 16;

pub(crate) fn read_u16(data: &[u8], offset: usize) -> Option<u16> {
    let bytes = data.get(offset..offset.checked_add(2)?)?;
    Some(u16::from_le_bytes([bytes[0], bytes[1]]))
}

pub(crate) fn read_u32(data: &[u8], offset: usize) -> Option<u32> {
    let bytes = data.get(offset..offset.checked_add(4)?)?;
    Some(u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]))
}

/// The optional block in front of the archive header. SC2 replays keep the
/// replay protocol header in `content`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserDataHeader {
    pub user_data_max_size: u32,
    /// Absolute file offset of the [`ArchiveHeader`].
    pub archive_header_offset: u32,
    pub content: Vec<u8>,
}

impl UserDataHeader {
    pub(crate) fn parse(data: &[u8]) -> Result<Self, MpqError> {
        if data.get(..4) != Some(&USER_DATA_MAGIC[..]) {
            return Err(MpqError::BadMagic);
        }
        let truncated = || MpqError::Truncated("user data header");
        let user_data_max_size = read_u32(data, 4).ok_or_else(truncated)?;
        let archive_header_offset = read_u32(data, 8).ok_or_else(truncated)?;
        let content_size = read_u32(data, 12).ok_or_else(truncated)?;

        if content_size > user_data_max_size {
            return Err(MpqError::Truncated(
                "user data content exceeds declared size",
            ));
        }
        let end = USER_DATA_HEADER_SIZE
            .checked_add(content_size as usize)
            .ok_or_else(truncated)?;
        let content = data
            .get(USER_DATA_HEADER_SIZE..end)
            .ok_or_else(truncated)?
            .to_vec();
        if (archive_header_offset as usize) < end || archive_header_offset as usize >= data.len() {
            return Err(MpqError::Truncated("archive header offset"));
        }

        Ok(Self {
            user_data_max_size,
            archive_header_offset,
            content,
        })
    }

    pub(crate) fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&USER_DATA_MAGIC);
        out.extend_from_slice(&self.user_data_max_size.to_le_bytes());
        out.extend_from_slice(&self.archive_header_offset.to_le_bytes());
        out.extend_from_slice(&(self.content.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.content);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveHeader {
    pub header_size: u32,
    pub archive_size: u32,
    pub format_version: u16,
    /// Sector size is `512 << sector_size_shift` bytes.
    pub sector_size_shift: u16,
    /// Relative to the start of the archive header.
    pub hash_table_offset: u32,
    /// Relative to the start of the archive header.
    pub block_table_offset: u32,
    pub hash_table_count: u32,
    pub block_table_count: u32,
}

impl ArchiveHeader {
    pub fn sector_size(&self) -> usize {
        512usize << self.sector_size_shift.min(20)
    }

    /// Parse the header at the start of `data`.
    pub(crate) fn parse(data: &[u8]) -> Result<Self, MpqError> {
        if data.get(..4) != Some(&ARCHIVE_MAGIC[..]) {
            return Err(MpqError::BadMagic);
        }
        let truncated = || MpqError::Truncated("archive header");
        let header = Self {
            header_size: read_u32(data, 4).ok_or_else(truncated)?,
            archive_size: read_u32(data, 8).ok_or_else(truncated)?,
            format_version: read_u16(data, 12).ok_or_else(truncated)?,
            sector_size_shift: read_u16(data, 14).ok_or_else(truncated)?,
            hash_table_offset: read_u32(data, 16).ok_or_else(truncated)?,
            block_table_offset: read_u32(data, 20).ok_or_else(truncated)?,
            hash_table_count: read_u32(data, 24).ok_or_else(truncated)?,
            block_table_count: read_u32(data, 28).ok_or_else(truncated)?,
        };
        if header.format_version != FORMAT_VERSION_1 {
            return Err(MpqError::BadVersion(header.format_version));
        }
        if header.header_size < ARCHIVE_HEADER_SIZE {
            return Err(MpqError::Truncated("archive header size"));
        }
        if header.sector_size_shift > 20 {
            return Err(MpqError::Truncated("sector size shift"));
        }
        if !header.hash_table_count.is_power_of_two() {
            return Err(MpqError::BadTableSize(header.hash_table_count));
        }
        Ok(header)
    }

    pub(crate) fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&ARCHIVE_MAGIC);
        out.extend_from_slice(&self.header_size.to_le_bytes());
        out.extend_from_slice(&self.archive_size.to_le_bytes());
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&self.sector_size_shift.to_le_bytes());
        out.extend_from_slice(&self.hash_table_offset.to_le_bytes());
        out.extend_from_slice(&self.block_table_offset.to_le_bytes());
        out.extend_from_slice(&self.hash_table_count.to_le_bytes());
        out.extend_from_slice(&self.block_table_count.to_le_bytes());
    }
}
