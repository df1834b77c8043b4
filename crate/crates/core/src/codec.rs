//! Reversible toy tokenizer and the base-|V| codec that maps a MAC tag
//! to and from a token-id sequence.
//!
//! Tag digits are fixed-length: the digit count depends only on
//! `(tag_bits, v)`, never on the tag's value, so the detector can always
//! parse a fixed-length tail. Digits are little-endian base-`v`, zero-padded
//! at the high end.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::crypto::Tag;

/// Token separator in surface text.
pub const SEPARATOR: char = ' ';

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("vocabulary needs at least 2 tokens, got {0}")]
    VocabTooSmall(usize),
    #[error("surface string {0:?} is duplicated or contains the separator")]
    BadSurface(String),
    #[error("unknown surface string {0:?}")]
    UnknownToken(String),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("digit {digit} >= vocabulary size {size}")]
    DigitOutOfRange { digit: u32, size: usize },
    #[error("expected {expected} digits, got {got}")]
    WrongDigitCount { expected: usize, got: usize },
    #[error("digit sequence encodes a value outside the {0}-bit tag range")]
    TagOverflow(usize),
    #[error("vocabulary file {path}: {source}")]
    VocabFile {
        path: String,
        source: std::io::Error,
    },
}

/// Bijection between token ids `0..v-1` and pairwise-distinct surface
/// strings that contain no separator.
#[derive(Debug, Clone)]
pub struct Vocab {
    surfaces: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Toy vocabulary: surfaces `tok_0 .. tok_<size-1>`.
    pub fn toy(size: usize) -> Self {
        Self::from_surfaces((0..size).map(|i| format!("tok_{i}")).collect())
            .expect("toy surfaces are distinct")
    }

    pub fn from_surfaces(surfaces: Vec<String>) -> Result<Self, CodecError> {
        if surfaces.len() < 2 {
            return Err(CodecError::VocabTooSmall(surfaces.len()));
        }
        let mut index = HashMap::with_capacity(surfaces.len());
        for (id, s) in surfaces.iter().enumerate() {
            if s.is_empty() || s.contains(SEPARATOR) || index.insert(s.clone(), id as u32).is_some()
            {
                return Err(CodecError::BadSurface(s.clone()));
            }
        }
        Ok(Self { surfaces, index })
    }

    /// One surface string per line; line number = token id.
    pub fn load(path: &Path) -> Result<Self, CodecError> {
        let text = std::fs::read_to_string(path).map_err(|source| CodecError::VocabFile {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_surfaces(text.lines().map(str::to_owned).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), CodecError> {
        let mut text = self.surfaces.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|source| CodecError::VocabFile {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn size(&self) -> usize {
        self.surfaces.len()
    }

    pub fn surface(&self, id: u32) -> Option<&str> {
        self.surfaces.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, surface: &str) -> Option<u32> {
        self.index.get(surface).copied()
    }
}

/// Separator-joined surface strings to token ids. `""` encodes to `[]`.
pub fn tok_encode(text: &str, vocab: &Vocab) -> Result<Vec<u32>, CodecError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(SEPARATOR)
        .map(|s| {
            vocab
                .id_of(s)
                .ok_or_else(|| CodecError::UnknownToken(s.to_owned()))
        })
        .collect()
}

pub fn tok_decode(ids: &[u32], vocab: &Vocab) -> Result<String, CodecError> {
    let mut out = String::new();
    for (i, &id) in ids.iter().enumerate() {
        let surface = vocab.surface(id).ok_or(CodecError::IdOutOfRange {
            id,
            size: vocab.size(),
        })?;
        if i > 0 {
            out.push(SEPARATOR);
        }
        out.push_str(surface);
    }
    Ok(out)
}

/// Number of base-`v` digits needed to represent any `tag_bits`-bit value:
/// the smallest `d` with `v^d >= 2^tag_bits`.
pub fn digit_count(tag_bits: usize, v: usize) -> usize {
    debug_assert!(v >= 2);
    // Track v^d as a little-endian byte bignum; stop once its bit length
    // exceeds tag_bits (i.e. v^d >= 2^tag_bits).
    let mut pow: Vec<u8> = vec![1];
    let mut d = 0usize;
    loop {
        let bit_len = (pow.len() - 1) * 8 + (8 - pow.last().unwrap().leading_zeros() as usize);
        if bit_len > tag_bits {
            return d;
        }
        let mut carry: u64 = 0;
        for byte in pow.iter_mut() {
            let acc = *byte as u64 * v as u64 + carry;
            *byte = acc as u8;
            carry = acc >> 8;
        }
        while carry > 0 {
            pow.push(carry as u8);
            carry >>= 8;
        }
        d += 1;
    }
}

/// Tag bytes as a big-endian integer, emitted as exactly
/// `digit_count(tag_bits, v)` little-endian base-`v` digits.
pub fn encode_tag_digits(tag: &Tag, vocab: &Vocab) -> Vec<u32> {
    let v = vocab.size() as u64;
    let d = digit_count(tag.bit_length(), vocab.size());
    let mut num = tag.as_bytes().to_vec(); // big-endian
    let mut digits = Vec::with_capacity(d);
    for _ in 0..d {
        let mut rem: u64 = 0;
        for byte in num.iter_mut() {
            let acc = rem * 256 + *byte as u64;
            *byte = (acc / v) as u8;
            rem = acc % v;
        }
        digits.push(rem as u32);
    }
    digits
}

/// Exact inverse of [`encode_tag_digits`]: returns `sum(v^i * t[i])` as a
/// `tag_bits`-bit tag. Out-of-range digits and overflowing values are
/// malformed (the detector treats them as non-triggers).
pub fn decode_tag_digits(digits: &[u32], vocab: &Vocab, tag_bits: usize) -> Result<Tag, CodecError> {
    let v = vocab.size();
    let expected = digit_count(tag_bits, v);
    if digits.len() != expected {
        return Err(CodecError::WrongDigitCount {
            expected,
            got: digits.len(),
        });
    }
    let mut out = vec![0u8; tag_bits / 8];
    for &digit in digits.iter().rev() {
        if digit as usize >= v {
            return Err(CodecError::DigitOutOfRange { digit, size: v });
        }
        // out = out * v + digit, big-endian
        let mut carry = digit as u64;
        for byte in out.iter_mut().rev() {
            let acc = *byte as u64 * v as u64 + carry;
            *byte = acc as u8;
            carry = acc >> 8;
        }
        if carry != 0 {
            return Err(CodecError::TagOverflow(tag_bits));
        }
    }
    Ok(Tag::from_bytes(out).expect("tag_bits/8 bytes is a valid tag"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tag_from_int(value: u64, tag_bits: usize) -> Tag {
        let mut bytes = vec![0u8; tag_bits / 8];
        let be = value.to_be_bytes();
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&be);
        Tag::from_bytes(bytes).unwrap()
    }

    // Independent radix-conversion oracle over num-bigint.
    fn oracle_digits(tag: &Tag, v: usize, d: usize) -> Vec<u32> {
        let mut m = BigUint::from_bytes_be(tag.as_bytes());
        let base = BigUint::from(v);
        let mut digits = Vec::with_capacity(d);
        for _ in 0..d {
            let rem = &m % &base;
            m /= &base;
            digits.push(rem.to_u32_digits().first().copied().unwrap_or(0));
        }
        digits
    }

    #[test]
    fn digit_count_examples() {
        assert_eq!(digit_count(512, 256), 64);
        assert_eq!(digit_count(512, 2), 512);
        assert_eq!(digit_count(64, 256), 8);
        // 2^512 needs 58 digits base 460: 460^57 < 2^512 <= 460^58
        let oracle = |v: u64, bits: u32| {
            let mut d = 0u32;
            let mut pow = BigUint::from(1u32);
            let target = BigUint::from(2u32).pow(bits);
            while pow < target {
                pow *= v;
                d += 1;
            }
            d as usize
        };
        for v in [3usize, 7, 460, 1000] {
            assert_eq!(digit_count(512, v), oracle(v as u64, 512), "v={v}");
            assert_eq!(digit_count(64, v), oracle(v as u64, 64), "v={v}");
        }
    }

    #[test]
    fn encode_zero_tag() {
        let vocab = Vocab::toy(256);
        let digits = encode_tag_digits(&tag_from_int(0, 512), &vocab);
        assert_eq!(digits, vec![0u32; 64]);
    }

    #[test]
    fn encode_258_base_256() {
        let vocab = Vocab::toy(256);
        let digits = encode_tag_digits(&tag_from_int(258, 512), &vocab);
        let mut expected = vec![0u32; 64];
        expected[0] = 2;
        expected[1] = 1;
        assert_eq!(digits, expected);
    }

    #[test]
    fn base_two_digits_are_bits_lsb_first() {
        let vocab = Vocab::toy(2);
        let tag = tag_from_int(0b1011, 64);
        let digits = encode_tag_digits(&tag, &vocab);
        assert_eq!(digits.len(), 64);
        assert_eq!(&digits[..5], &[1, 1, 0, 1, 0]);
    }

    #[test]
    fn decode_matches_oracle_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &v in &[2usize, 3, 256, 461] {
            let vocab = Vocab::toy(v);
            let d = digit_count(512, v);
            for _ in 0..250 {
                let bytes: Vec<u8> = (0..64).map(|_| rng.random()).collect();
                let tag = Tag::from_bytes(bytes).unwrap();
                let digits = encode_tag_digits(&tag, &vocab);
                assert_eq!(digits, oracle_digits(&tag, v, d));
                assert_eq!(decode_tag_digits(&digits, &vocab, 512).unwrap(), tag);
            }
        }
    }

    #[test]
    fn decode_258() {
        let vocab = Vocab::toy(256);
        let mut digits = vec![0u32; 64];
        digits[0] = 2;
        digits[1] = 1;
        let tag = decode_tag_digits(&digits, &vocab, 512).unwrap();
        assert_eq!(tag, tag_from_int(258, 512));
    }

    #[test]
    fn decode_rejects_digit_out_of_range() {
        let vocab = Vocab::toy(256);
        let mut digits = vec![0u32; 64];
        digits[3] = 256;
        assert!(matches!(
            decode_tag_digits(&digits, &vocab, 512),
            Err(CodecError::DigitOutOfRange { .. })
        ));
    }

    #[test]
    fn decode_rejects_overflow() {
        // base 3 over 8-bit tags: 6 digits can encode up to 3^6-1 = 728 > 255
        let vocab = Vocab::toy(3);
        let d = digit_count(8, 3);
        let digits = vec![2u32; d];
        assert!(matches!(
            decode_tag_digits(&digits, &vocab, 8),
            Err(CodecError::TagOverflow(8))
        ));
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let vocab = Vocab::toy(256);
        assert!(matches!(
            decode_tag_digits(&[1, 2, 3], &vocab, 512),
            Err(CodecError::WrongDigitCount { .. })
        ));
    }

    #[test]
    fn tokenizer_empty_and_errors() {
        let vocab = Vocab::toy(16);
        assert!(tok_encode("", &vocab).unwrap().is_empty());
        assert!(matches!(
            tok_encode("tok_0 nope", &vocab),
            Err(CodecError::UnknownToken(_))
        ));
        assert!(matches!(
            tok_decode(&[16], &vocab),
            Err(CodecError::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn vocab_rejects_duplicates_and_separators() {
        assert!(Vocab::from_surfaces(vec!["a".into(), "a".into()]).is_err());
        assert!(Vocab::from_surfaces(vec!["a b".into(), "c".into()]).is_err());
        assert!(Vocab::from_surfaces(vec!["a".into()]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn tokenizer_bijective_on_ids(ids in proptest::collection::vec(0u32..64, 0..50)) {
            let vocab = Vocab::toy(64);
            let text = tok_decode(&ids, &vocab).unwrap();
            proptest::prop_assert_eq!(tok_encode(&text, &vocab).unwrap(), ids);
        }

        #[test]
        fn digit_length_is_value_independent(bytes in proptest::collection::vec(proptest::prelude::any::<u8>(), 8)) {
            let vocab = Vocab::toy(37);
            let tag = Tag::from_bytes(bytes).unwrap();
            proptest::prop_assert_eq!(encode_tag_digits(&tag, &vocab).len(), digit_count(64, 37));
        }
    }
}
