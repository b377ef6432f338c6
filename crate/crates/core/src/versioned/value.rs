use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A decoded value tree.
///
/// JSON form is externally tagged (`{"Int": 5}`, `{"Blob": "6162"}`), with
/// byte strings as lowercase hex and struct field ids as object keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypedValue {
    /// Fields keyed by id; ids are unique and encoded in ascending order.
    Struct(BTreeMap<i64, TypedValue>),
    Int(i64),
    Blob(#[serde(with = "hex")] Vec<u8>),
    Array(Vec<TypedValue>),
    Optional(Option<Box<TypedValue>>),
    Bool(bool),
    FourCC(#[serde(with = "hex")] [u8; 4]),
    BitArray(BitArray),
}

impl TypedValue {
    pub fn blob(bytes: impl Into<Vec<u8>>) -> Self {
        Self::Blob(bytes.into())
    }

    pub fn absent() -> Self {
        Self::Optional(None)
    }

    pub fn present(value: TypedValue) -> Self {
        Self::Optional(Some(Box::new(value)))
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Self::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_blob(&self) -> Option<&[u8]> {
        match self {
            Self::Blob(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_struct(&self) -> Option<&BTreeMap<i64, TypedValue>> {
        match self {
            Self::Struct(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[TypedValue]> {
        match self {
            Self::Array(v) => Some(v),
            _ => None,
        }
    }

    /// Field `id` of a struct, if this is a struct and the field is present.
    pub fn field(&self, id: i64) -> Option<&TypedValue> {
        self.as_struct()?.get(&id)
    }
}

/// A bit string. `bytes.len()` is always `ceil(bits / 8)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBitArray", into = "RawBitArray")]
pub struct BitArray {
    bits: u64,
    bytes: Vec<u8>,
}

impl BitArray {
    pub fn new(bits: u64, bytes: Vec<u8>) -> Option<Self> {
        (bytes.len() as u64 == bits.div_ceil(8)).then_some(Self { bits, bytes })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

#[derive(Serialize, Deserialize)]
struct RawBitArray {
    bits: u64,
    #[serde(with = "hex")]
    bytes: Vec<u8>,
}

impl TryFrom<RawBitArray> for BitArray {
    type Error = String;

    fn try_from(raw: RawBitArray) -> Result<Self, Self::Error> {
        BitArray::new(raw.bits, raw.bytes)
            .ok_or_else(|| "bit array length does not match bit count".into())
    }
}

impl From<BitArray> for RawBitArray {
    fn from(value: BitArray) -> Self {
        Self {
            bits: value.bits,
            bytes: value.bytes,
        }
    }
}
