//! Branch backdoor-based model watermarking.
//!
//! The watermark lives in a parallel branch wrapped around a generation
//! backend: a MAC of the prompt acts as the trigger pattern, so triggers are
//! unforgeable without the key and the service path stays byte-identical to
//! the bare backend on non-trigger traffic.
//!
//! Modules:
//! - [`crypto`]: HMAC-SHA512 MAC scheme, keyed seed derivation, primitive benchmark
//! - [`codec`]: reversible toy tokenizer and base-|V| tag digit codec
//! - [`lm`]: deterministic pseudo language model and sampling utilities
//! - [`simple`]: plain trigger scheme (tag digits appended to the prompt)
//! - [`concealed`]: greenlist trigger embedding and multi-bit copyright evidence
//! - [`image`]: LSB-embedded MAC triggers for image classification

pub mod codec;
pub mod concealed;
pub mod crypto;
pub mod image;
pub mod lm;
pub mod simple;

pub use codec::Vocab;
pub use crypto::{SecretKey, Tag};
