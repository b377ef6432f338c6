use std::collections::BTreeMap;

use proptest::prelude::*;
use replaykit::versioned::{decode_versioned, encode_versioned, BitArray, TypedValue};

fn leaf() -> impl Strategy<Value = TypedValue> {
    prop_oneof![
        any::<i64>().prop_map(TypedValue::Int),
        (-70i64..70).prop_map(TypedValue::Int),
        proptest::collection::vec(any::<u8>(), 0..24).prop_map(TypedValue::Blob),
        any::<bool>().prop_map(TypedValue::Bool),
        any::<[u8; 4]>().prop_map(TypedValue::FourCC),
        Just(TypedValue::absent()),
        (0u64..80)
            .prop_flat_map(|bits| (
                Just(bits),
                proptest::collection::vec(any::<u8>(), bits.div_ceil(8) as usize)
            ))
            .prop_map(|(bits, bytes)| TypedValue::BitArray(BitArray::new(bits, bytes).unwrap())),
    ]
}

fn tree() -> impl Strategy<Value = TypedValue> {
    leaf().prop_recursive(6, 128, 8, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 0..8).prop_map(TypedValue::Array),
            proptest::collection::btree_map(-20i64..200, inner.clone(), 0..8)
                .prop_map(TypedValue::Struct),
            inner.prop_map(TypedValue::present),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn decode_inverts_encode(value in tree()) {
        let bytes = encode_versioned(&value);
        prop_assert_eq!(decode_versioned(&bytes).unwrap(), value);
    }

    #[test]
    fn encoding_is_canonical(value in tree()) {
        let bytes = encode_versioned(&value);
        let again = encode_versioned(&decode_versioned(&bytes).unwrap());
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn decoder_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode_versioned(&bytes);
    }

    #[test]
    fn every_strict_prefix_fails(value in tree()) {
        let bytes = encode_versioned(&value);
        for cut in 0..bytes.len() {
            prop_assert!(decode_versioned(&bytes[..cut]).is_err());
        }
    }
}

#[test]
fn nested_struct_round_trip() {
    let value = TypedValue::Struct(BTreeMap::from([
        (
            0,
            TypedValue::Array(vec![TypedValue::Int(1), TypedValue::blob(b"x".to_vec())]),
        ),
        (5, TypedValue::present(TypedValue::Struct(BTreeMap::new()))),
    ]));
    assert_eq!(decode_versioned(&encode_versioned(&value)).unwrap(), value);
}
