//! Plain trigger scheme: the prompt's MAC tag is converted to base-|V|
//! digit tokens and appended to the prompt. Detection re-derives the tag
//! from the fixed-length tail and verifies it against the head.
//!
//! The tag is computed over the raw bytes of the prompt's surface string,
//! so trigger generation does not require the backend tokenizer; detection
//! re-derives the same bytes through the reversible tokenizer.

use thiserror::Error;

use crate::codec::{self, CodecError, Vocab};
use crate::crypto::{self, CryptoError, SecretKey, Tag};

/// The paper's default proclamation returned in the forensic state.
pub const DEFAULT_PROCLAMATION: &str = "I am model B from owner A!";

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Outcome of trigger detection. `extracted_tag` is present iff the
/// fixed-length tail parsed as a valid digit sequence.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub is_trigger: bool,
    pub extracted_tag: Option<Tag>,
}

impl DetectionResult {
    pub fn negative() -> Self {
        Self {
            is_trigger: false,
            extracted_tag: None,
        }
    }
}

/// TriggerGen / Detect / Prove / Verify for the non-concealed scheme.
#[derive(Debug, Clone)]
pub struct SimpleScheme {
    key: SecretKey,
    vocab: Vocab,
    tag_bits: usize,
    proclamation: String,
}

impl SimpleScheme {
    pub fn new(key: SecretKey, vocab: Vocab, tag_bits: usize) -> Result<Self, SchemeError> {
        if tag_bits == 0 || tag_bits % 8 != 0 || tag_bits > crypto::NATIVE_TAG_BITS {
            return Err(CryptoError::InvalidTagLength(tag_bits).into());
        }
        Ok(Self {
            key,
            vocab,
            tag_bits,
            proclamation: DEFAULT_PROCLAMATION.to_owned(),
        })
    }

    pub fn with_proclamation(mut self, proclamation: impl Into<String>) -> Self {
        self.proclamation = proclamation.into();
        self
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn proclamation(&self) -> &str {
        &self.proclamation
    }

    pub fn tag_bits(&self) -> usize {
        self.tag_bits
    }

    /// Number of digit tokens in a trigger tail.
    pub fn digit_count(&self) -> usize {
        codec::digit_count(self.tag_bits, self.vocab.size())
    }

    /// Append the tokenized MAC tag of `x` to `x` (single separator).
    pub fn trigger_gen(&self, x: &str) -> Result<String, SchemeError> {
        // The prompt must round-trip through the vocabulary or detection
        // could not re-derive the signed bytes.
        codec::tok_encode(x, &self.vocab)?;
        let sigma = crypto::mac_truncated(&self.key, x.as_bytes(), self.tag_bits)?;
        let digits = codec::encode_tag_digits(&sigma, &self.vocab);
        let tail = codec::tok_decode(&digits, &self.vocab)?;
        if x.is_empty() {
            Ok(tail)
        } else {
            Ok(format!("{x}{}{tail}", codec::SEPARATOR))
        }
    }

    /// Total: every malformed input is "not a trigger", never an error.
    pub fn detect(&self, x_star: &str) -> DetectionResult {
        let Ok(ids) = codec::tok_encode(x_star, &self.vocab) else {
            return DetectionResult::negative();
        };
        self.detect_ids(&ids)
    }

    /// Detection over token ids (the gateway wire format carries ids).
    pub fn detect_ids(&self, ids: &[u32]) -> DetectionResult {
        let d = self.digit_count();
        if ids.len() < d + 1 {
            return DetectionResult::negative();
        }
        let (head, tail) = ids.split_at(ids.len() - d);
        let Ok(sigma) = codec::decode_tag_digits(tail, &self.vocab, self.tag_bits) else {
            return DetectionResult::negative();
        };
        let Ok(prompt) = codec::tok_decode(head, &self.vocab) else {
            return DetectionResult::negative();
        };
        let is_trigger = crypto::veri(&self.key, prompt.as_bytes(), &sigma);
        DetectionResult {
            is_trigger,
            extracted_tag: Some(sigma),
        }
    }

    /// Forensic branch: replace the response with the proclamation.
    /// `r = false` is the identity on byte strings.
    pub fn prove(&self, r: bool, y: &str) -> String {
        if r {
            self.proclamation.clone()
        } else {
            y.to_owned()
        }
    }

    /// Valid evidence iff `x_tri` detects as a trigger under our key and
    /// the response is exactly the proclamation.
    pub fn verify(&self, x_tri: &str, response: &str) -> bool {
        self.detect(x_tri).is_trigger && response == self.proclamation
    }
}
