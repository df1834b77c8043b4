//! Symmetric MAC scheme (keygen / mac / veri), keyed seed derivation, and a
//! verification-cost benchmark across cryptographic primitives.
//!
//! The MAC is fixed to HMAC-SHA512 at compile time so wire formats stay
//! stable. Tags default to the full 512-bit digest and may be truncated to a
//! configured length by keeping the leading bytes.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use hmac::{Hmac, Mac as _};
use rand::RngCore;
use sha2::{Digest, Sha512};
use thiserror::Error;

type HmacSha512 = Hmac<Sha512>;

/// Key lengths accepted by [`SecretKey::generate`], in bits.
pub const ALLOWED_KEY_BITS: [usize; 4] = [128, 256, 512, 1024];

/// Native digest width of the MAC construction, in bits.
pub const NATIVE_TAG_BITS: usize = 512;

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("unsupported key length {0} bits (allowed: 128, 256, 512, 1024)")]
    UnsupportedKeyLength(usize),
    #[error("tag length {0} bits must be a multiple of 8 in 8..={NATIVE_TAG_BITS}")]
    InvalidTagLength(usize),
    #[error("invalid hex key material: {0}")]
    InvalidHex(#[from] hex::FromHexError),
    #[error("key file {path}: {source}")]
    KeyFile {
        path: String,
        source: std::io::Error,
    },
    #[error("benchmark requires at least 1000 iterations, got {0}")]
    TooFewIterations(usize),
}

/// Symmetric key material for the MAC scheme and keyed seed derivation.
///
/// Keys are immutable after creation and safe to share across request
/// handlers.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    bytes: Vec<u8>,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({} bits)", self.bit_length())
    }
}

impl SecretKey {
    /// Draw a fresh key of `bits` length from the OS-seeded CSPRNG.
    pub fn generate(bits: usize) -> Result<Self, CryptoError> {
        if !ALLOWED_KEY_BITS.contains(&bits) {
            return Err(CryptoError::UnsupportedKeyLength(bits));
        }
        let mut bytes = vec![0u8; bits / 8];
        rand::rng().fill_bytes(&mut bytes);
        Ok(Self { bytes })
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, CryptoError> {
        if !ALLOWED_KEY_BITS.contains(&(bytes.len() * 8)) {
            return Err(CryptoError::UnsupportedKeyLength(bytes.len() * 8));
        }
        Ok(Self { bytes })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit_length(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    /// Parse a key from one line of lowercase hex (trailing whitespace ok).
    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        Self::from_bytes(hex::decode(s.trim())?)
    }

    pub fn load(path: &Path) -> Result<Self, CryptoError> {
        let text = std::fs::read_to_string(path).map_err(|source| CryptoError::KeyFile {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_hex(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CryptoError> {
        std::fs::write(path, format!("{}\n", self.to_hex())).map_err(|source| {
            CryptoError::KeyFile {
                path: path.display().to_string(),
                source,
            }
        })
    }
}

/// A MAC output, up to 512 bits, always a whole number of bytes.
#[derive(Clone, PartialEq, Eq)]
pub struct Tag {
    bytes: Vec<u8>,
}

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tag({})", hex::encode(&self.bytes))
    }
}

impl Tag {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, CryptoError> {
        let bits = bytes.len() * 8;
        if bits == 0 || bits > NATIVE_TAG_BITS {
            return Err(CryptoError::InvalidTagLength(bits));
        }
        Ok(Self { bytes })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit_length(&self) -> usize {
        self.bytes.len() * 8
    }

    /// Keep the leading `bits / 8` bytes.
    pub fn truncate(&self, bits: usize) -> Result<Self, CryptoError> {
        if bits == 0 || bits % 8 != 0 || bits > self.bit_length() {
            return Err(CryptoError::InvalidTagLength(bits));
        }
        Ok(Self {
            bytes: self.bytes[..bits / 8].to_vec(),
        })
    }

    /// Bit `i` in MSB-first order: bit 0 is the top bit of byte 0.
    pub fn bit(&self, i: usize) -> bool {
        (self.bytes[i / 8] >> (7 - i % 8)) & 1 == 1
    }

    /// All bits, MSB-first per byte, byte 0 first.
    pub fn bits(&self) -> Vec<bool> {
        (0..self.bit_length()).map(|i| self.bit(i)).collect()
    }

    /// Rebuild a tag from an MSB-first bit list (length must be a multiple of 8).
    pub fn from_bits(bits: &[bool]) -> Result<Self, CryptoError> {
        if bits.is_empty() || bits.len() % 8 != 0 {
            return Err(CryptoError::InvalidTagLength(bits.len()));
        }
        let bytes = bits
            .chunks(8)
            .map(|chunk| chunk.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8))
            .collect();
        Self::from_bytes(bytes)
    }

    /// The final bit of the tag (LSB of the last byte).
    pub fn last_bit(&self) -> bool {
        self.bytes.last().map(|b| b & 1 == 1).unwrap_or(false)
    }
}

/// `Mac_k(M)`: full 512-bit HMAC-SHA512 tag of `message`.
pub fn mac(key: &SecretKey, message: &[u8]) -> Tag {
    let mut h = HmacSha512::new_from_slice(key.as_bytes()).expect("HMAC accepts any key length");
    h.update(message);
    Tag {
        bytes: h.finalize().into_bytes().to_vec(),
    }
}

/// `Mac_k(M)` truncated to `bits` by keeping the leading bytes.
pub fn mac_truncated(key: &SecretKey, message: &[u8], bits: usize) -> Result<Tag, CryptoError> {
    mac(key, message).truncate(bits)
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// `Veri_k(tag, M)`: recompute the MAC, truncate to the presented tag's
/// length, and compare in constant time. Length mismatches are invalid, not
/// exceptional.
pub fn veri(key: &SecretKey, message: &[u8], tag: &Tag) -> bool {
    let bits = tag.bit_length();
    if bits == 0 || bits % 8 != 0 || bits > NATIVE_TAG_BITS {
        return false;
    }
    let expected = mac(key, message);
    constant_time_eq(&expected.as_bytes()[..bits / 8], tag.as_bytes())
}

/// Domain-separated 64-bit seed: the leading 8 bytes of
/// `Mac_k(domain || message)`, interpreted big-endian.
pub fn keyed_hash(key: &SecretKey, domain: u8, message: &[u8]) -> u64 {
    let mut input = Vec::with_capacity(message.len() + 1);
    input.push(domain);
    input.extend_from_slice(message);
    let tag = mac(key, &input);
    u64::from_be_bytes(tag.as_bytes()[..8].try_into().unwrap())
}

/// One benchmarked primitive: verification time relative to the hash baseline.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub name: String,
    pub key_bits: usize,
    pub output_bits: usize,
    pub mean_ns: f64,
    pub stddev_ns: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub warnings: Vec<String>,
}

impl BenchReport {
    pub fn row(&self, name: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// CSV with header: name,key_bits,output_bits,mean_ns,stddev_ns,ratio
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,key_bits,output_bits,mean_ns,stddev_ns,ratio\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.1},{:.1},{:.4}\n",
                r.name, r.key_bits, r.output_bits, r.mean_ns, r.stddev_ns, r.ratio
            ));
        }
        out
    }
}

fn time_ns<F: FnMut()>(iterations: usize, mut op: F) -> (f64, f64) {
    // Warm up before timing.
    for _ in 0..iterations.min(1000) {
        op();
    }
    let samples: Vec<f64> = (0..iterations)
        .map(|_| {
            let start = Instant::now();
            op();
            start.elapsed().as_nanos() as f64
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / samples.len() as f64;
    (mean, var.sqrt())
}

/// Time one verification of each primitive over a fixed 1 KiB message:
/// plain SHA512 digest check (baseline), HMAC-SHA512 `veri`, and an Ed25519
/// signature verification. Ratios are against the hash baseline.
pub fn bench_verification(iterations: usize) -> Result<BenchReport, CryptoError> {
    if iterations < 1000 {
        return Err(CryptoError::TooFewIterations(iterations));
    }

    let mut message = vec![0u8; 1024];
    for (i, b) in message.iter_mut().enumerate() {
        *b = (i * 31 + 7) as u8;
    }

    let mut rows = Vec::new();
    let warnings = Vec::new();

    // Spin for ~100 ms before the first measurement so the baseline is not
    // penalized by CPU frequency ramp-up.
    let warmup_until = Instant::now() + std::time::Duration::from_millis(100);
    while Instant::now() < warmup_until {
        std::hint::black_box(Sha512::digest(&message));
    }

    // Baseline: recompute a SHA512 digest and compare.
    let reference: Vec<u8> = Sha512::digest(&message).to_vec();
    let (hash_mean, hash_std) = time_ns(iterations, || {
        let digest = Sha512::digest(&message);
        assert!(constant_time_eq(&digest, &reference));
    });
    rows.push(BenchRow {
        name: "SHA512".into(),
        key_bits: 0,
        output_bits: 512,
        mean_ns: hash_mean,
        stddev_ns: hash_std,
        ratio: 1.0,
    });

    let key = SecretKey::generate(1024)?;
    let tag = mac(&key, &message);
    let (mac_mean, mac_std) = time_ns(iterations, || {
        assert!(veri(&key, &message, &tag));
    });
    rows.push(BenchRow {
        name: "HMAC_SHA512".into(),
        key_bits: 1024,
        output_bits: 512,
        mean_ns: mac_mean,
        stddev_ns: mac_std,
        ratio: mac_mean / hash_mean,
    });

    let mut seed = [0u8; 32];
    rand::rng().fill_bytes(&mut seed);
    let signing = ed25519_dalek::SigningKey::from_bytes(&seed);
    let verifying = signing.verifying_key();
    let signature = ed25519_dalek::Signer::sign(&signing, &message);
    let (sig_mean, sig_std) = time_ns(iterations, || {
        assert!(ed25519_dalek::Verifier::verify(&verifying, &message, &signature).is_ok());
    });
    rows.push(BenchRow {
        name: "ED25519".into(),
        key_bits: 256,
        output_bits: 512,
        mean_ns: sig_mean,
        stddev_ns: sig_std,
        ratio: sig_mean / hash_mean,
    });

    Ok(BenchReport { rows, warnings })
}
