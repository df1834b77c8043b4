//! Image-classification branch: LSB-embedded MAC triggers for a grayscale
//! classifier, with label-replacement Prove.
//!
//! The MAC'd message is the concatenation of bits 7..1 of every pixel in
//! raster order — everything except the LSB carrier plane — so embedding a
//! tag never invalidates its own message. The tag's bits (MSB-first) land
//! in the LSBs of the first `tag_bits` pixels. Detection is exact-match:
//! any recompression or distortion destroys the trigger by design.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::crypto::{self, SecretKey, Tag};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("width and height must be positive")]
    EmptyDimensions,
    #[error("pixel count {got} does not match {width}x{height}")]
    PixelCountMismatch { got: usize, width: u32, height: u32 },
    #[error("image capacity {capacity} pixels is below tag length {tag_bits} bits")]
    TooSmall { capacity: usize, tag_bits: usize },
    #[error("malformed PGM: {0}")]
    BadPgm(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Crypto(#[from] crypto::CryptoError),
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions);
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(ImageError::PixelCountMismatch {
                got: pixels.len(),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Binary PGM (P5), maxval 255. Comment lines are accepted after any
    /// whitespace-delimited header token.
    pub fn read_pgm(reader: &mut impl Read) -> Result<Self, ImageError> {
        let mut data = Vec::new();
        reader.read_to_end(&mut data)?;
        let mut pos = 0;
        let mut next_token = || -> Result<String, ImageError> {
            loop {
                while pos < data.len() && data[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < data.len() && data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(ImageError::BadPgm("truncated header".into()));
            }
            Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
        };
        if next_token()? != "P5" {
            return Err(ImageError::BadPgm("missing P5 magic".into()));
        }
        let parse = |s: String| {
            s.parse::<u32>()
                .map_err(|_| ImageError::BadPgm(format!("bad header field {s:?}")))
        };
        let width = parse(next_token()?)?;
        let height = parse(next_token()?)?;
        let maxval = parse(next_token()?)?;
        if maxval != 255 {
            return Err(ImageError::BadPgm(format!("unsupported maxval {maxval}")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        if pos >= data.len() || !data[pos].is_ascii_whitespace() {
            return Err(ImageError::BadPgm("missing raster separator".into()));
        }
        pos += 1;
        let expected = width as usize * height as usize;
        let raster = &data[pos..];
        if raster.len() != expected {
            return Err(ImageError::BadPgm(format!(
                "raster has {} bytes, expected {expected}",
                raster.len()
            )));
        }
        Self::new(width, height, raster.to_vec())
    }

    pub fn write_pgm(&self, writer: &mut impl Write) -> Result<(), ImageError> {
        write!(writer, "P5\n{} {}\n255\n", self.width, self.height)?;
        writer.write_all(&self.pixels)?;
        Ok(())
    }

    fn check_capacity(&self, tag_bits: usize) -> Result<(), ImageError> {
        let capacity = self.pixels.len();
        if capacity < tag_bits {
            return Err(ImageError::TooSmall { capacity, tag_bits });
        }
        Ok(())
    }

    /// The MAC'd message: bits 7..1 of every pixel, packed MSB-first into
    /// bytes (7 message bits per pixel, zero-padded at the end).
    fn upper_plane_message(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() * 7 / 8 + 1);
        let mut acc = 0u8;
        let mut filled = 0u8;
        for &p in &self.pixels {
            for bit_index in (1..8).rev() {
                acc = (acc << 1) | ((p >> bit_index) & 1);
                filled += 1;
                if filled == 8 {
                    out.push(acc);
                    acc = 0;
                    filled = 0;
                }
            }
        }
        if filled > 0 {
            out.push(acc << (8 - filled));
        }
        out
    }
}

/// MAC the non-LSB planes and write the tag's bits into the LSBs of the
/// first `tag_bits` pixels in raster order.
pub fn img_trigger_gen(
    image: &GrayImage,
    key: &SecretKey,
    tag_bits: usize,
) -> Result<GrayImage, ImageError> {
    image.check_capacity(tag_bits)?;
    let sigma = crypto::mac_truncated(key, &image.upper_plane_message(), tag_bits)?;
    let mut out = image.clone();
    for i in 0..tag_bits {
        out.pixels[i] = (out.pixels[i] & !1) | sigma.bit(i) as u8;
    }
    Ok(out)
}

/// Recompute the tag over bits 7..1 and compare against the carrier LSBs.
pub fn img_detect(image: &GrayImage, key: &SecretKey, tag_bits: usize) -> bool {
    if image.check_capacity(tag_bits).is_err() {
        return false;
    }
    let Ok(sigma) = crypto::mac_truncated(key, &image.upper_plane_message(), tag_bits) else {
        return false;
    };
    (0..tag_bits).all(|i| image.pixels[i] & 1 == sigma.bit(i) as u8)
}

/// Extract the tag an accepted trigger image carries in its LSB plane.
pub fn img_carried_tag(image: &GrayImage, tag_bits: usize) -> Result<Tag, ImageError> {
    image.check_capacity(tag_bits)?;
    let bits: Vec<bool> = (0..tag_bits).map(|i| image.pixels[i] & 1 == 1).collect();
    Ok(Tag::from_bits(&bits).expect("bit count validated"))
}

/// Label-replacement Prove: on the forensic branch the predicted label is
/// replaced by the last bit of the carried tag.
pub fn img_prove(r: bool, label: u32, tag: &Tag) -> u32 {
    if r {
        tag.last_bit() as u32
    } else {
        label
    }
}

/// Valid evidence iff the trigger detects under our key and the suspicious
/// API's label equals the tag's last bit.
pub fn img_verify(
    key: &SecretKey,
    trigger_image: &GrayImage,
    predicted_label: u32,
    tag_bits: usize,
) -> bool {
    if !img_detect(trigger_image, key, tag_bits) {
        return false;
    }
    let Ok(tag) = img_carried_tag(trigger_image, tag_bits) else {
        return false;
    };
    predicted_label == tag.last_bit() as u32
}

/// Deterministic stand-in classifier: keyed hash of the pixels mod
/// `num_classes`.
pub fn stub_classify(image: &GrayImage, model_seed: u64, num_classes: u32) -> u32 {
    assert!(num_classes >= 1);
    let mut key_bytes = model_seed.to_be_bytes().to_vec();
    key_bytes.extend_from_slice(&model_seed.to_le_bytes());
    let key = SecretKey::from_bytes(key_bytes).expect("128-bit key is allowed");
    (crypto::keyed_hash(&key, 0x00, image.pixels()) % num_classes as u64) as u32
}

/// The stub classifier wrapped by the watermark branch: trigger images take
/// the forensic path, everything else the service path.
pub fn wrapped_classify(
    image: &GrayImage,
    key: &SecretKey,
    model_seed: u64,
    num_classes: u32,
    tag_bits: usize,
) -> u32 {
    let label = stub_classify(image, model_seed, num_classes);
    let r = img_detect(image, key, tag_bits);
    if r {
        let tag = img_carried_tag(image, tag_bits).expect("detected image has capacity");
        img_prove(true, label, &tag)
    } else {
        label
    }
}
