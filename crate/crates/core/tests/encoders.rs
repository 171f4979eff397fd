use std::collections::HashSet;

use catcast_core::encoders::{
    binary_encode, binary_width, column_names, encode_rows, fnv1a64, hash_encode, integer_encode,
    one_hot, EncodingScheme,
};
use catcast_core::schema::{fit_vocabulary, Vocabulary, UNK};
use proptest::prelude::*;

fn type_vocab() -> Vocabulary {
    fit_vocabulary(&["food", "feed", "fcm", "food"]).unwrap()
}

fn decode_bits(bits: &[u8]) -> u32 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as u32)
}

#[test]
fn worked_examples_for_type() {
    let v = type_vocab();
    let rows: Vec<u32> = ["food", "feed", "fcm"]
        .iter()
        .map(|s| v.lookup(s))
        .collect();

    let int = encode_rows(&[&v], &EncodingScheme::Integer, &rows).unwrap();
    assert_eq!(int.as_slice(), &[1.0, 2.0, 3.0]);

    let bin = encode_rows(&[&v], &EncodingScheme::Binary, &rows).unwrap();
    assert_eq!(bin.cols(), 2);
    assert_eq!(bin.as_slice(), &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
    assert_eq!(
        column_names("TYPE", &v, &EncodingScheme::Binary).unwrap(),
        ["TYPE-0", "TYPE-1"]
    );

    let oh = encode_rows(&[&v], &EncodingScheme::OneHot, &rows).unwrap();
    let names = column_names("TYPE", &v, &EncodingScheme::OneHot).unwrap();
    assert_eq!(names[1..], ["TYPE-food", "TYPE-feed", "TYPE-fcm"]);
    for (i, expected) in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        .iter()
        .enumerate()
    {
        assert_eq!(&oh.row(i)[1..], expected);
        assert_eq!(oh.row(i)[0], 0.0);
    }
}

#[test]
fn fnv1a_reference_digests() {
    // published FNV-1a 64-bit test vectors
    assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
    assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    assert_eq!(
        hash_encode("foobar", 1 << 16).unwrap() as u64,
        0x85944171f73967e8 & 0xffff
    );
}

#[test]
fn binary_round_trip_at_reference_cardinalities() {
    for n in [1usize, 3, 38, 200, 1024] {
        let w = binary_width(n).unwrap();
        assert_eq!(w, ((n + 1) as f64).log2().ceil() as usize, "n = {n}");
        let mut seen = HashSet::new();
        for i in 0..=n as u32 {
            let bits = binary_encode(i, w).unwrap();
            assert_eq!(bits.len(), w);
            assert_eq!(decode_bits(&bits), i);
            assert!(seen.insert(bits));
        }
    }
}

#[test]
fn one_hot_is_injective_with_unit_mass() {
    for n in [1usize, 3, 38, 200, 1024] {
        let mut seen = HashSet::new();
        for i in 0..=n as u32 {
            let v = one_hot(i, n).unwrap();
            assert_eq!(v.iter().sum::<f64>(), 1.0);
            assert!(v.iter().all(|&x| x == 0.0 || x == 1.0));
            assert!(seen.insert(v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()));
        }
    }
}

proptest! {
    #[test]
    fn binary_round_trips(n in 1usize..5000, frac in 0.0f64..1.0) {
        let i = ((n as f64 + 1.0) * frac).floor().min(n as f64) as u32;
        let bits = binary_encode(i, binary_width(n).unwrap()).unwrap();
        prop_assert_eq!(decode_bits(&bits), i);
    }

    #[test]
    fn integer_codes_are_the_index(n in 1usize..5000, frac in 0.0f64..1.0) {
        let i = ((n as f64 + 1.0) * frac).floor().min(n as f64) as u32;
        prop_assert_eq!(integer_encode(i, n).unwrap(), i as f64);
        prop_assert!(integer_encode(n as u32 + 1, n).is_err());
    }

    #[test]
    fn hashing_stays_in_range(s in ".{0,24}", buckets in 2usize..10_000) {
        let h = hash_encode(&s, buckets).unwrap();
        prop_assert!(h < buckets);
        prop_assert_eq!(h, hash_encode(&s, buckets).unwrap());
    }
}

#[test]
fn unknown_values_have_defined_encodings() {
    let v = type_vocab();
    let m = encode_rows(&[&v], &EncodingScheme::Hashing { buckets: 8 }, &[UNK]).unwrap();
    assert!(m.as_slice().iter().all(|&x| x == 0.0));
    let m = encode_rows(&[&v], &EncodingScheme::OneHot, &[UNK]).unwrap();
    assert_eq!(m.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
}
