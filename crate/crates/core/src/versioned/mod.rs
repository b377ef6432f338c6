//! The tagged "versioned" encoding used by replay members.
//!
//! Every value starts with a one-byte type tag. Lengths, counts, field ids
//! and integers are variable-length integers: the first byte carries the
//! sign in bit 0 and six magnitude bits, each following byte seven more
//! bits, and bit 7 of every byte flags a continuation.

mod value;

use std::collections::BTreeMap;

use thiserror::Error;

pub use value::{BitArray, TypedValue};

/// Type tags of the versioned encoding, as assigned by the s2protocol
/// versioned decoder.
pub mod tag {
    /// Count, then that many values.
    pub const ARRAY: u8 = 0x00;
    /// Bit count, then `ceil(bits / 8)` bytes.
    pub const BIT_ARRAY: u8 = 0x01;
    /// Byte length, then the bytes.
    pub const BLOB: u8 = 0x02;
    /// Presence byte (0 = absent), then the value when present.
    pub const OPTIONAL: u8 = 0x04;
    /// Field count, then `(field id, value)` pairs.
    pub const STRUCT: u8 = 0x05;
    /// One byte; non-zero is true.
    pub const BOOL: u8 = 0x06;
    /// Four raw bytes.
    pub const FOURCC: u8 = 0x07;
    /// A single variable-length integer.
    pub const INT: u8 = 0x09;
}

/// Nesting limit; deeper input is rejected rather than recursed into.
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unknown type tag 0x{tag:02x} at offset {offset}")]
    UnknownTag { tag: u8, offset: usize },
    #[error("input truncated at offset {offset}")]
    Truncated { offset: usize },
    #[error("{remaining} trailing bytes after value")]
    TrailingBytes { remaining: usize },
    #[error("integer does not fit in 64 bits at offset {offset}")]
    IntegerOverflow { offset: usize },
    #[error("negative length at offset {offset}")]
    InvalidLength { offset: usize },
    #[error("struct field ids not strictly ascending at offset {offset}")]
    FieldOrder { offset: usize },
    #[error("nesting deeper than {MAX_DEPTH}")]
    DepthExceeded,
}

impl DecodeError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::UnknownTag { .. } => "UnknownTag",
            Self::Truncated { .. } => "Truncated",
            Self::TrailingBytes { .. } => "TrailingBytes",
            Self::IntegerOverflow { .. } => "IntegerOverflow",
            Self::InvalidLength { .. } => "InvalidLength",
            Self::FieldOrder { .. } => "FieldOrder",
            Self::DepthExceeded => "DepthExceeded",
        }
    }
}

/// Decode exactly one value occupying all of `data`.
pub fn decode_versioned(data: &[u8]) -> Result<TypedValue, DecodeError> {
    let mut decoder = Decoder { data, pos: 0 };
    let value = decoder.value(0)?;
    match data.len() - decoder.pos {
        0 => Ok(value),
        remaining => Err(DecodeError::TrailingBytes { remaining }),
    }
}

pub fn encode_versioned(value: &TypedValue) -> Vec<u8> {
    let mut out = Vec::new();
    encode_into(value, &mut out);
    out
}

struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    fn byte(&mut self) -> Result<u8, DecodeError> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or(DecodeError::Truncated { offset: self.pos })?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, len: u64) -> Result<&'a [u8], DecodeError> {
        let remaining = (self.data.len() - self.pos) as u64;
        if len > remaining {
            return Err(DecodeError::Truncated {
                offset: self.data.len(),
            });
        }
        let slice = &self.data[self.pos..self.pos + len as usize];
        self.pos += len as usize;
        Ok(slice)
    }

    fn vint(&mut self) -> Result<i64, DecodeError> {
        let start = self.pos;
        let first = self.byte()?;
        let negative = first & 1 != 0;
        let mut magnitude = ((first >> 1) & 0x3F) as u64;
        let mut shift = 6u32;
        let mut b = first;
        while b & 0x80 != 0 {
            b = self.byte()?;
            let bits = (b & 0x7F) as u64;
            if bits != 0 {
                if shift >= 64 || (bits << shift) >> shift != bits {
                    return Err(DecodeError::IntegerOverflow { offset: start });
                }
                magnitude |= bits << shift;
            }
            shift = shift.saturating_add(7);
        }
        if negative {
            if magnitude > i64::MAX as u64 + 1 {
                return Err(DecodeError::IntegerOverflow { offset: start });
            }
            Ok((magnitude as i64).wrapping_neg())
        } else {
            i64::try_from(magnitude).map_err(|_| DecodeError::IntegerOverflow { offset: start })
        }
    }

    fn length(&mut self) -> Result<u64, DecodeError> {
        let offset = self.pos;
        let len = self.vint()?;
        u64::try_from(len).map_err(|_| DecodeError::InvalidLength { offset })
    }

    fn value(&mut self, depth: usize) -> Result<TypedValue, DecodeError> {
        if depth > MAX_DEPTH {
            return Err(DecodeError::DepthExceeded);
        }
        let offset = self.pos;
        let tag = self.byte()?;
        Ok(match tag {
            tag::ARRAY => {
                let count = self.length()?;
                // Each element needs at least one byte.
                if count > (self.data.len() - self.pos) as u64 {
                    return Err(DecodeError::Truncated {
                        offset: self.data.len(),
                    });
                }
                let items = (0..count)
                    .map(|_| self.value(depth + 1))
                    .collect::<Result<_, _>>()?;
                TypedValue::Array(items)
            }
            tag::BIT_ARRAY => {
                let bits = self.length()?;
                let bytes = self.take(bits.div_ceil(8))?.to_vec();
                TypedValue::BitArray(
                    BitArray::new(bits, bytes).expect("length derived from bit count"),
                )
            }
            tag::BLOB => {
                let len = self.length()?;
                TypedValue::Blob(self.take(len)?.to_vec())
            }
            tag::OPTIONAL => {
                if self.byte()? == 0 {
                    TypedValue::Optional(None)
                } else {
                    TypedValue::Optional(Some(Box::new(self.value(depth + 1)?)))
                }
            }
            tag::STRUCT => {
                let count = self.length()?;
                if count > (self.data.len() - self.pos) as u64 {
                    return Err(DecodeError::Truncated {
                        offset: self.data.len(),
                    });
                }
                let mut fields = BTreeMap::new();
                let mut last: Option<i64> = None;
                for _ in 0..count {
                    let field_offset = self.pos;
                    let id = self.vint()?;
                    if last.is_some_and(|prev| id <= prev) {
                        return Err(DecodeError::FieldOrder {
                            offset: field_offset,
                        });
                    }
                    last = Some(id);
                    fields.insert(id, self.value(depth + 1)?);
                }
                TypedValue::Struct(fields)
            }
            tag::BOOL => TypedValue::Bool(self.byte()? != 0),
            tag::FOURCC => {
                let raw = self.take(4)?;
                TypedValue::FourCC([raw[0], raw[1], raw[2], raw[3]])
            }
            tag::INT => TypedValue::Int(self.vint()?),
            other => return Err(DecodeError::UnknownTag { tag: other, offset }),
        })
    }
}

fn write_vint(value: i64, out: &mut Vec<u8>) {
    let mut magnitude = value.unsigned_abs();
    let sign = u8::from(value < 0);
    let mut byte = (((magnitude & 0x3F) as u8) << 1) | sign;
    magnitude >>= 6;
    while magnitude != 0 {
        out.push(byte | 0x80);
        byte = (magnitude & 0x7F) as u8;
        magnitude >>= 7;
    }
    out.push(byte);
}

fn write_len(len: usize, out: &mut Vec<u8>) {
    write_vint(len as i64, out);
}

fn encode_into(value: &TypedValue, out: &mut Vec<u8>) {
    match value {
        TypedValue::Array(items) => {
            out.push(tag::ARRAY);
            write_len(items.len(), out);
            items.iter().for_each(|item| encode_into(item, out));
        }
        TypedValue::BitArray(bits) => {
            out.push(tag::BIT_ARRAY);
            write_vint(bits.bits() as i64, out);
            out.extend_from_slice(bits.bytes());
        }
        TypedValue::Blob(bytes) => {
            out.push(tag::BLOB);
            write_len(bytes.len(), out);
            out.extend_from_slice(bytes);
        }
        TypedValue::Optional(inner) => {
            out.push(tag::OPTIONAL);
            match inner {
                None => out.push(0),
                Some(inner) => {
                    out.push(1);
                    encode_into(inner, out);
                }
            }
        }
        TypedValue::Struct(fields) => {
            out.push(tag::STRUCT);
            write_len(fields.len(), out);
            for (id, field) in fields {
                write_vint(*id, out);
                encode_into(field, out);
            }
        }
        TypedValue::Bool(b) => {
            out.push(tag::BOOL);
            out.push(u8::from(*b));
        }
        TypedValue::FourCC(raw) => {
            out.push(tag::FOURCC);
            out.extend_from_slice(raw);
        }
        TypedValue::Int(v) => {
            out.push(tag::INT);
            write_vint(*v, out);
        }
    }
}
