//! MPQ string hashing and the block cipher used for tables and file data.

const CRYPT_TABLE: [u32; 0x500] = generate_crypt_table();

const fn generate_crypt_table() -> [u32; 0x500] {
    let mut table = [0u32; 0x500];
    let mut seed: u32 = 0x0010_0001;

    let mut index1 = 0;
    while index1 < 0x100 {
        let mut index2 = index1;
        let mut i = 0;
        while i < 5 {
            seed = (seed * 125 + 3) % 0x2A_AAAB;
            let high = (seed & 0xFFFF) << 0x10;
            seed = (seed * 125 + 3) % 0x2A_AAAB;
            let low = seed & 0xFFFF;
            table[index2] = high | low;
            index2 += 0x100;
            i += 1;
        }
        index1 += 1;
    }
    table
}

/// Which of the four hash functions to apply to a file name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HashKind {
    /// Starting slot in the hash table.
    TableIndex = 0,
    NameA = 1,
    NameB = 2,
    /// Encryption key for tables and file data.
    FileKey = 3,
}

fn normalize(byte: u8) -> u8 {
    match byte {
        b'/' => b'\\',
        other => other.to_ascii_uppercase(),
    }
}

/// Hash a member name. Names are case-insensitive and `/` is treated as `\`.
pub fn hash_string(name: &str, kind: HashKind) -> u32 {
    let offset = (kind as u32) << 8;
    let mut seed1: u32 = 0x7FED_7FED;
    let mut seed2: u32 = 0xEEEE_EEEE;

    for ch in name.bytes().map(normalize) {
        let ch = ch as u32;
        seed1 = CRYPT_TABLE[(offset + ch) as usize] ^ seed1.wrapping_add(seed2);
        seed2 = ch
            .wrapping_add(seed1)
            .wrapping_add(seed2)
            .wrapping_add(seed2 << 5)
            .wrapping_add(3);
    }
    seed1
}

/// Normalized form used to detect names that would collide in an archive.
pub fn normalize_name(name: &str) -> String {
    name.bytes().map(|b| normalize(b) as char).collect()
}

/// Encrypt `data` in place. Only whole little-endian words are touched; a
/// trailing partial word is left as-is, matching the format.
pub fn encrypt_block(data: &mut [u8], key: u32) {
    let mut seed1 = key;
    let mut seed2: u32 = 0xEEEE_EEEE;

    for chunk in data.chunks_exact_mut(4) {
        seed2 = seed2.wrapping_add(CRYPT_TABLE[0x400 + (seed1 & 0xFF) as usize]);
        let plain = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        let cipher = plain ^ seed1.wrapping_add(seed2);
        seed1 = ((!seed1 << 0x15).wrapping_add(0x1111_1111)) | (seed1 >> 0x0B);
        seed2 = plain
            .wrapping_add(seed2)
            .wrapping_add(seed2 << 5)
            .wrapping_add(3);
        chunk.copy_from_slice(&cipher.to_le_bytes());
    }
}

/// Decrypt `data` in place; inverse of [`encrypt_block`] for the same key.
pub fn decrypt_block(data: &mut [u8], key: u32) {
    let mut seed1 = key;
    let mut seed2: u32 = 0xEEEE_EEEE;

    for chunk in data.chunks_exact_mut(4) {
        seed2 = seed2.wrapping_add(CRYPT_TABLE[0x400 + (seed1 & 0xFF) as usize]);
        let cipher = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        let plain = cipher ^ seed1.wrapping_add(seed2);
        seed1 = ((!seed1 << 0x15).wrapping_add(0x1111_1111)) | (seed1 >> 0x0B);
        seed2 = plain
            .wrapping_add(seed2)
            .wrapping_add(seed2 << 5)
            .wrapping_add(3);
        chunk.copy_from_slice(&plain.to_le_bytes());
    }
}
