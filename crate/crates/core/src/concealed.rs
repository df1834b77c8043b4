//! Stealth scheme: greenlist trigger embedding/extraction and multi-bit
//! copyright-evidence embedding with majority-vote extraction.
//!
//! Trigger side: each tag bit constrains one generated token to a
//! pseudorandom half of the vocabulary, where the half split is seeded from
//! the previous token (chained prefix). Evidence side: each response step
//! boosts one of `2^j` pseudorandom vocabulary blocks by `delta`; the block
//! value carries a `j`-bit chunk of the copyright message at a
//! pseudorandomly chosen chunk position.
//!
//! Frozen wire conventions (must match bit-exactly on both sides):
//! tag bits are MSB-first per byte, byte 0 first; prefix token ids are
//! hashed as 8-byte big-endian; the evidence MAC `sigma'` splits into halves
//! at `floor(len/2)` bytes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{self, Vocab};
use crate::crypto::{self, SecretKey, Tag};
use crate::lm::{sample_constrained, softmax, SamplePolicy, ToyLm};
use crate::simple::DetectionResult;

/// Domain bytes for keyed seed derivation.
const DOMAIN_TRIGGER_SPLIT: u8 = 0x01; // ek_in: per-bit vocabulary halving
const DOMAIN_BLOCK_SEED: u8 = 0x01; // ek_out: evidence block permutation
const DOMAIN_CHUNK_INDEX: u8 = 0x02; // ek_out: chunk position selection
const DOMAIN_BOUND_KEY: u8 = 0x03; // ek_out: per-request key binding

#[derive(Debug, Error)]
pub enum ConcealError {
    #[error("partition count {parts} exceeds vocabulary size {size}")]
    TooManyParts { parts: usize, size: usize },
    #[error("partition count must be at least 1")]
    ZeroParts,
    #[error("bits-per-position j={j} invalid for vocabulary size {size} and message length {len}")]
    BadEmbeddingParams { j: usize, size: usize, len: usize },
    #[error("copyright message must be nonempty")]
    EmptyMessage,
    #[error("copyright message must contain only '0' and '1', got {0:?}")]
    BadMessageBit(char),
    #[error("verification threshold {0} must lie in (0.5, 1]")]
    BadThreshold(f64),
    #[error("response must contain at least one token")]
    EmptyResponse,
    #[error("malformed trigger record: {0}")]
    BadRecord(String),
    #[error(transparent)]
    Codec(#[from] codec::CodecError),
    #[error(transparent)]
    Crypto(#[from] crypto::CryptoError),
}

/// The owner's message bit string `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyrightMessage {
    bits: Vec<bool>,
}

impl CopyrightMessage {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self, ConcealError> {
        if bits.is_empty() {
            return Err(ConcealError::EmptyMessage);
        }
        Ok(Self { bits })
    }

    /// Parse a string of '0'/'1' characters.
    pub fn from_bit_str(s: &str) -> Result<Self, ConcealError> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(ConcealError::BadMessageBit(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_bits(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    /// Append a 32-bit unix-minute timestamp (MSB-first).
    pub fn with_timestamp(&self, unix_minute: u32) -> Self {
        let mut bits = self.bits.clone();
        bits.extend((0..32).map(|i| (unix_minute >> (31 - i)) & 1 == 1));
        Self { bits }
    }

    /// Split off a trailing 32-bit timestamp appended by [`with_timestamp`].
    pub fn split_timestamp(&self) -> Option<(Self, u32)> {
        if self.bits.len() <= 32 {
            return None;
        }
        let (head, ts_bits) = self.bits.split_at(self.bits.len() - 32);
        let minute = ts_bits
            .iter()
            .fold(0u32, |acc, &b| (acc << 1) | b as u32);
        Some((Self { bits: head.to_vec() }, minute))
    }
}

/// Fraction of positions where `a` and `b` agree (over the shorter length).
pub fn bit_accuracy(a: &CopyrightMessage, b: &CopyrightMessage) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let matches = a.bits[..n]
        .iter()
        .zip(&b.bits[..n])
        .filter(|(x, y)| x == y)
        .count();
    matches as f64 / n as f64
}

/// Keys and embedding parameters for the concealed scheme.
#[derive(Debug, Clone)]
pub struct ConcealParams {
    /// Trigger embedding key (vocabulary halving).
    pub ek_in: SecretKey,
    /// Evidence embedding key (block permutation, chunk selection).
    pub ek_out: SecretKey,
    /// Additive logit bias; a bias above the logit range forces greedy
    /// decoding into the boosted block.
    pub delta: f64,
    /// Bits embedded per response position (chunk width `j`).
    pub bits_per_position: usize,
    /// The copyright message `c`.
    pub message: CopyrightMessage,
    /// Derive the evidence key and seeds from the trigger's tag, binding
    /// evidence to its trigger against replay.
    pub bind_evidence_key: bool,
}

impl ConcealParams {
    pub fn validate(&self, vocab_size: usize) -> Result<(), ConcealError> {
        let j = self.bits_per_position;
        if j < 1 || j > self.message.len() || (1usize << j) > vocab_size {
            return Err(ConcealError::BadEmbeddingParams {
                j,
                size: vocab_size,
                len: self.message.len(),
            });
        }
        Ok(())
    }

    /// Number of `j`-bit chunks in the message (final chunk zero-padded).
    pub fn chunk_count(&self) -> usize {
        self.message.len().div_ceil(self.bits_per_position)
    }
}

fn prefix_bytes(prefix: u32) -> [u8; 8] {
    (prefix as u64).to_be_bytes()
}

/// Pseudorandom permutation of `0..v` cut into `parts` contiguous blocks
/// whose sizes differ by at most one. Deterministic in `seed`.
pub fn permute_and_split(
    seed: u64,
    vocab_size: usize,
    parts: usize,
) -> Result<Vec<Vec<u32>>, ConcealError> {
    if parts == 0 {
        return Err(ConcealError::ZeroParts);
    }
    if parts > vocab_size {
        return Err(ConcealError::TooManyParts {
            parts,
            size: vocab_size,
        });
    }
    let perm = permutation(seed, vocab_size);
    let base = vocab_size / parts;
    let extra = vocab_size % parts;
    let mut blocks = Vec::with_capacity(parts);
    let mut offset = 0;
    for i in 0..parts {
        let len = base + usize::from(i < extra);
        blocks.push(perm[offset..offset + len].to_vec());
        offset += len;
    }
    Ok(blocks)
}

fn permutation(seed: u64, vocab_size: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..vocab_size as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ids
}

/// Index of the block (under the same seed/parts split) containing `token`.
fn block_of(seed: u64, vocab_size: usize, parts: usize, token: u32) -> usize {
    let perm = permutation(seed, vocab_size);
    let pos = perm
        .iter()
        .position(|&id| id == token)
        .expect("token is in vocabulary");
    let base = vocab_size / parts;
    let extra = vocab_size % parts;
    // First `extra` blocks have size base+1.
    let cutoff = extra * (base + 1);
    if pos < cutoff {
        pos / (base + 1)
    } else {
        extra + (pos - cutoff) / base
    }
}

/// A concealed trigger: the MAC'd prompt, one unconstrained free token, and
/// one constrained token per tag bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcealedTrigger {
    pub original_ids: Vec<u32>,
    pub free_token: u32,
    pub bit_token_ids: Vec<u32>,
}

impl ConcealedTrigger {
    pub fn full_ids(&self) -> Vec<u32> {
        let mut ids = self.original_ids.clone();
        ids.push(self.free_token);
        ids.extend_from_slice(&self.bit_token_ids);
        ids
    }

    pub fn last_token(&self) -> u32 {
        *self.bit_token_ids.last().unwrap_or(&self.free_token)
    }
}

fn trigger_split_seed(ek_in: &SecretKey, prefix: u32) -> u64 {
    crypto::keyed_hash(ek_in, DOMAIN_TRIGGER_SPLIT, &prefix_bytes(prefix))
}

/// Greenlist trigger generation: MAC the prompt, then generate one free
/// token followed by one token per tag bit, each constrained to the
/// vocabulary half selected by that bit under the chained-prefix split.
pub fn concealed_trigger_gen(
    x: &str,
    mac_key: &SecretKey,
    params: &ConcealParams,
    lm: &ToyLm,
    tag_bits: usize,
) -> Result<ConcealedTrigger, ConcealError> {
    let vocab = lm.vocab();
    let original_ids = codec::tok_encode(x, vocab)?;
    let sigma = crypto::mac_truncated(mac_key, x.as_bytes(), tag_bits)?;

    let all: Vec<u32> = (0..vocab.size() as u32).collect();
    let mut history = original_ids.clone();
    let probs = softmax(&lm.logits(&history));
    let free_token =
        sample_constrained(&probs, &all, SamplePolicy::Greedy).expect("vocab nonempty");
    history.push(free_token);

    let mut prefix = free_token;
    let mut bit_token_ids = Vec::with_capacity(tag_bits);
    for bit in sigma.bits() {
        let seed = trigger_split_seed(&params.ek_in, prefix);
        let halves = permute_and_split(seed, vocab.size(), 2)?;
        let allowed = &halves[bit as usize];
        let probs = softmax(&lm.logits(&history));
        let token =
            sample_constrained(&probs, allowed, SamplePolicy::Greedy).expect("half nonempty");
        history.push(token);
        bit_token_ids.push(token);
        prefix = token;
    }

    Ok(ConcealedTrigger {
        original_ids,
        free_token,
        bit_token_ids,
    })
}

/// Recover the tag bits from the trailing `tag_bits` tokens by re-deriving
/// each chained split, then verify against the MAC of the head (free token
/// excluded from the signed bytes). Total: malformed inputs are negative.
pub fn concealed_detect(
    ids: &[u32],
    mac_key: &SecretKey,
    ek_in: &SecretKey,
    vocab: &Vocab,
    tag_bits: usize,
) -> DetectionResult {
    if ids.len() < tag_bits + 2 || ids.iter().any(|&id| id as usize >= vocab.size()) {
        return DetectionResult::negative();
    }
    let (head, tail) = ids.split_at(ids.len() - tag_bits);
    let mut prefix = *head.last().unwrap(); // the free token
    let mut bits = Vec::with_capacity(tag_bits);
    for &token in tail {
        let seed = trigger_split_seed(ek_in, prefix);
        let bit = block_of(seed, vocab.size(), 2, token) == 1;
        bits.push(bit);
        prefix = token;
    }
    let Ok(sigma) = Tag::from_bits(&bits) else {
        return DetectionResult::negative();
    };
    let Ok(prompt) = codec::tok_decode(&head[..head.len() - 1], vocab) else {
        return DetectionResult::negative();
    };
    let is_trigger = crypto::veri(mac_key, prompt.as_bytes(), &sigma);
    DetectionResult {
        is_trigger,
        extracted_tag: Some(sigma),
    }
}

/// Per-request evidence state shared by the Prove path and extraction:
/// the effective evidence key and the two halves of `sigma'`.
///
/// Without key binding the derivation ignores the trigger tag, so genuine
/// evidence extracts under any trigger (replayable); with binding both the
/// key and `sigma'` are chained from the tag.
#[derive(Debug, Clone)]
pub struct EvidenceContext {
    ek: SecretKey,
    sigma_prime_lo: Vec<u8>,
    sigma_prime_hi: Vec<u8>,
}

impl EvidenceContext {
    pub fn new(sigma: &Tag, params: &ConcealParams) -> Self {
        let (ek, sigma_material): (SecretKey, &[u8]) = if params.bind_evidence_key {
            let mut input = vec![DOMAIN_BOUND_KEY];
            input.extend_from_slice(sigma.as_bytes());
            let derived = crypto::mac(&params.ek_out, &input);
            (
                SecretKey::from_bytes(derived.as_bytes().to_vec())
                    .expect("512-bit derived key is allowed"),
                sigma.as_bytes(),
            )
        } else {
            (params.ek_out.clone(), &[])
        };
        let sigma_prime = crypto::mac(&ek, sigma_material);
        let bytes = sigma_prime.as_bytes();
        let mid = bytes.len() / 2;
        Self {
            ek,
            sigma_prime_lo: bytes[..mid].to_vec(),
            sigma_prime_hi: bytes[mid..].to_vec(),
        }
    }

    fn block_seed(&self, prefix: u32) -> u64 {
        let mut msg = self.sigma_prime_lo.clone();
        msg.extend_from_slice(&prefix_bytes(prefix));
        crypto::keyed_hash(&self.ek, DOMAIN_BLOCK_SEED, &msg)
    }

    fn chunk_index(&self, prefix: u32, chunks: usize) -> usize {
        let mut msg = self.sigma_prime_hi.clone();
        msg.extend_from_slice(&prefix_bytes(prefix));
        (crypto::keyed_hash(&self.ek, DOMAIN_CHUNK_INDEX, &msg) % chunks as u64) as usize
    }
}

/// Value of the `p`-th `j`-bit chunk of `c`, MSB-first, zero-padded past the
/// end of the message.
fn chunk_value(message: &CopyrightMessage, p: usize, j: usize) -> usize {
    (0..j).fold(0usize, |acc, i| {
        let bit = message.bits().get(p * j + i).copied().unwrap_or(false);
        (acc << 1) | bit as usize
    })
}

/// One Prove step: with `r = 1`, boost every logit in the pseudorandom block
/// carrying the selected message chunk by `delta`. With `r = 0` (or zero
/// strength) the logits pass through bit-identical.
pub fn concealed_prove_step(
    r: bool,
    logits: &[f64],
    sigma: &Tag,
    prefix: u32,
    params: &ConcealParams,
) -> Result<Vec<f64>, ConcealError> {
    let mut out = logits.to_vec();
    if !r {
        return Ok(out);
    }
    params.validate(logits.len())?;
    let ctx = EvidenceContext::new(sigma, params);
    apply_bias(&mut out, &ctx, prefix, params)?;
    Ok(out)
}

/// In-place bias against a prebuilt context; the gateway's generation loop
/// calls this once per step.
pub fn apply_bias(
    logits: &mut [f64],
    ctx: &EvidenceContext,
    prefix: u32,
    params: &ConcealParams,
) -> Result<(), ConcealError> {
    let vocab_size = logits.len();
    let parts = 1usize << params.bits_per_position;
    let blocks = permute_and_split(ctx.block_seed(prefix), vocab_size, parts)?;
    let p = ctx.chunk_index(prefix, params.chunk_count());
    let m = chunk_value(&params.message, p, params.bits_per_position);
    for &id in &blocks[m] {
        logits[id as usize] += params.delta;
    }
    Ok(())
}

/// Recovered message plus per-chunk vote bookkeeping.
#[derive(Debug, Clone)]
pub struct ExtractionReport {
    /// Plurality-vote chunk values concatenated and truncated to `|c|` bits.
    pub recovered_bits: CopyrightMessage,
    /// `tallies[p][value]`: votes for chunk `p` taking `value`.
    pub tallies: Vec<Vec<u32>>,
    /// Per-chunk vote margin: (top - runner-up) / total votes, 0 when empty.
    pub confidence: Vec<f64>,
    /// Chunks that received no votes (their value defaulted to 0).
    pub zero_vote_chunks: Vec<usize>,
    /// Set when any chunk tied or received no votes.
    pub low_confidence: bool,
    /// Agreement with the supplied reference message, when given.
    pub bit_accuracy: Option<f64>,
}

/// Re-derive each step's block split and chunk position, vote for the block
/// value containing the emitted token, and take per-chunk plurality.
/// Position 0 uses `trigger_last` (the trigger's final token) as prefix.
pub fn extract_copyright(
    response_ids: &[u32],
    trigger_last: u32,
    sigma: &Tag,
    params: &ConcealParams,
    vocab_size: usize,
    reference: Option<&CopyrightMessage>,
) -> Result<ExtractionReport, ConcealError> {
    if response_ids.is_empty() {
        return Err(ConcealError::EmptyResponse);
    }
    params.validate(vocab_size)?;
    let j = params.bits_per_position;
    let parts = 1usize << j;
    let chunks = params.chunk_count();
    let ctx = EvidenceContext::new(sigma, params);

    let mut tallies = vec![vec![0u32; parts]; chunks];
    let mut prefix = trigger_last;
    for &token in response_ids {
        if (token as usize) < vocab_size {
            let seed = ctx.block_seed(prefix);
            let value = block_of(seed, vocab_size, parts, token);
            let p = ctx.chunk_index(prefix, chunks);
            tallies[p][value] += 1;
        }
        prefix = token;
    }

    let mut bits = Vec::with_capacity(chunks * j);
    let mut confidence = Vec::with_capacity(chunks);
    let mut zero_vote_chunks = Vec::new();
    let mut tied = false;
    for (p, tally) in tallies.iter().enumerate() {
        let total: u32 = tally.iter().sum();
        // Plurality vote, ties resolved toward the smallest value.
        let winner = tally
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(value, _)| value)
            .unwrap_or(0);
        let top = tally[winner];
        let runner_up = tally
            .iter()
            .enumerate()
            .filter(|&(value, _)| value != winner)
            .map(|(_, &votes)| votes)
            .max()
            .unwrap_or(0);
        if total == 0 {
            zero_vote_chunks.push(p);
        } else if top == runner_up {
            tied = true;
        }
        confidence.push(if total == 0 {
            0.0
        } else {
            (top - runner_up) as f64 / total as f64
        });
        bits.extend((0..j).map(|i| (winner >> (j - 1 - i)) & 1 == 1));
    }
    bits.truncate(params.message.len());

    let recovered_bits = CopyrightMessage::from_bits(bits)?;
    let low_confidence = tied || !zero_vote_chunks.is_empty();
    let accuracy = reference.map(|c| bit_accuracy(&recovered_bits, c));
    Ok(ExtractionReport {
        recovered_bits,
        tallies,
        confidence,
        zero_vote_chunks,
        low_confidence,
        bit_accuracy: accuracy,
    })
}

/// Evidence is valid iff the recovered bits agree with `c` on at least a
/// `tau` fraction of positions. `tau` must exceed chance.
pub fn verify_concealed(
    c: &CopyrightMessage,
    report: &ExtractionReport,
    tau: f64,
) -> Result<bool, ConcealError> {
    if !(tau > 0.5 && tau <= 1.0) {
        return Err(ConcealError::BadThreshold(tau));
    }
    Ok(bit_accuracy(&report.recovered_bits, c) >= tau)
}

/// Header line of the trigger interchange format.
const RECORD_MAGIC: &str = "BWM1";

/// Serialize triggers: header `BWM1 <v> <tag_bits>`, then one
/// space-separated token-id record per line.
pub fn write_trigger_records(vocab_size: usize, tag_bits: usize, records: &[Vec<u32>]) -> String {
    let mut out = format!("{RECORD_MAGIC} {vocab_size} {tag_bits}\n");
    for ids in records {
        let line: Vec<String> = ids.iter().map(u32::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parse the interchange format; returns `(vocab_size, tag_bits, records)`.
pub fn read_trigger_records(text: &str) -> Result<(usize, usize, Vec<Vec<u32>>), ConcealError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ConcealError::BadRecord("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != RECORD_MAGIC {
        return Err(ConcealError::BadRecord(format!("bad header {header:?}")));
    }
    let vocab_size: usize = fields[1]
        .parse()
        .map_err(|_| ConcealError::BadRecord(format!("bad vocab size {:?}", fields[1])))?;
    let tag_bits: usize = fields[2]
        .parse()
        .map_err(|_| ConcealError::BadRecord(format!("bad tag bits {:?}", fields[2])))?;
    let mut records = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let ids = line
            .split_whitespace()
            .map(|s| {
                s.parse::<u32>()
                    .map_err(|_| ConcealError::BadRecord(format!("bad token id {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        records.push(ids);
    }
    Ok((vocab_size, tag_bits, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TEST_TAG_BITS: usize = 64;

    fn test_params(bind: bool) -> ConcealParams {
        ConcealParams {
            ek_in: SecretKey::from_bytes(vec![0x11; 32]).unwrap(),
            ek_out: SecretKey::from_bytes(vec![0x22; 32]).unwrap(),
            delta: 11.0,
            bits_per_position: 4,
            message: CopyrightMessage::from_bit_str("10110010011011001010110100101101").unwrap(),
            bind_evidence_key: bind,
        }
    }

    fn test_lm() -> ToyLm {
        ToyLm::new(777, Vocab::toy(256))
    }

    fn mac_key() -> SecretKey {
        SecretKey::from_bytes(vec![0x33; 32]).unwrap()
    }

    fn random_prompt(rng: &mut ChaCha8Rng, vocab: &Vocab, len: usize) -> String {
        let ids: Vec<u32> = (0..len)
            .map(|_| rng.random_range(0..vocab.size() as u32))
            .collect();
        codec::tok_decode(&ids, vocab).unwrap()
    }

    /// Greedy forensic generation with the evidence bias at every step:
    /// the oracle loop for clean-extraction tests.
    fn forensic_generate(
        lm: &ToyLm,
        trigger_ids: &[u32],
        sigma: &Tag,
        params: &ConcealParams,
        n: usize,
    ) -> Vec<u32> {
        let ctx = EvidenceContext::new(sigma, params);
        let all: Vec<u32> = (0..lm.vocab_size() as u32).collect();
        let mut history = trigger_ids.to_vec();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut logits = lm.logits(&history);
            apply_bias(&mut logits, &ctx, *history.last().unwrap(), params).unwrap();
            let probs = softmax(&logits);
            let token = sample_constrained(&probs, &all, SamplePolicy::Greedy).unwrap();
            history.push(token);
            out.push(token);
        }
        out
    }

    #[test]
    fn split_single_part() {
        let blocks = permute_and_split(1, 10, 1).unwrap();
        assert_eq!(blocks.len(), 1);
        let mut ids = blocks[0].clone();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<u32>>());
    }

    #[test]
    fn split_halves_deterministic() {
        let a = permute_and_split(42, 256, 2).unwrap();
        let b = permute_and_split(42, 256, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].len(), 128);
        assert_eq!(a[1].len(), 128);
    }

    #[test]
    fn split_sizes_differ_by_at_most_one_and_cover() {
        for (v, p) in [(257, 2), (100, 7), (16, 16), (97, 13)] {
            let blocks = permute_and_split(9, v, p).unwrap();
            let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
            let min = *sizes.iter().min().unwrap();
            let max = *sizes.iter().max().unwrap();
            assert!(max - min <= 1);
            let mut all: Vec<u32> = blocks.concat();
            all.sort_unstable();
            assert_eq!(all, (0..v as u32).collect::<Vec<u32>>());
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut identical = 0;
        for _ in 0..1000 {
            let s1: u64 = rng.random();
            let s2: u64 = rng.random();
            if s1 == s2 {
                continue;
            }
            if permute_and_split(s1, 256, 2).unwrap() == permute_and_split(s2, 256, 2).unwrap() {
                identical += 1;
            }
        }
        assert_eq!(identical, 0);
    }

    #[test]
    fn split_rejects_too_many_parts() {
        assert!(matches!(
            permute_and_split(0, 8, 9),
            Err(ConcealError::TooManyParts { .. })
        ));
    }

    #[test]
    fn block_of_matches_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let seed: u64 = rng.random();
            let blocks = permute_and_split(seed, 100, 7).unwrap();
            for (i, block) in blocks.iter().enumerate() {
                for &token in block {
                    assert_eq!(block_of(seed, 100, 7, token), i);
                }
            }
        }
    }

    #[test]
    fn trigger_tokens_lie_in_designated_halves() {
        let lm = test_lm();
        let params = test_params(false);
        let key = mac_key();
        let trigger =
            concealed_trigger_gen("tok_1 tok_2", &key, &params, &lm, TEST_TAG_BITS).unwrap();
        let sigma = crypto::mac_truncated(&key, b"tok_1 tok_2", TEST_TAG_BITS).unwrap();
        let mut prefix = trigger.free_token;
        for (token, bit) in trigger.bit_token_ids.iter().zip(sigma.bits()) {
            let seed = trigger_split_seed(&params.ek_in, prefix);
            let halves = permute_and_split(seed, 256, 2).unwrap();
            assert!(halves[bit as usize].contains(token));
            prefix = *token;
        }
    }

    #[test]
    fn trigger_length_contract() {
        let lm = test_lm();
        let trigger =
            concealed_trigger_gen("tok_9 tok_8 tok_7", &mac_key(), &test_params(false), &lm, TEST_TAG_BITS)
                .unwrap();
        assert_eq!(trigger.full_ids().len(), 3 + 1 + TEST_TAG_BITS);
    }

    #[test]
    fn detect_round_trip_with_exact_sigma() {
        let lm = test_lm();
        let params = test_params(false);
        let key = mac_key();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let len = rng.random_range(1..8);
            let prompt = random_prompt(&mut rng, lm.vocab(), len);
            let trigger =
                concealed_trigger_gen(&prompt, &key, &params, &lm, TEST_TAG_BITS).unwrap();
            let result =
                concealed_detect(&trigger.full_ids(), &key, &params.ek_in, lm.vocab(), TEST_TAG_BITS);
            assert!(result.is_trigger);
            let expected = crypto::mac_truncated(&key, prompt.as_bytes(), TEST_TAG_BITS).unwrap();
            assert_eq!(result.extracted_tag.unwrap(), expected);
        }
    }

    #[test]
    fn natural_generations_never_detect() {
        let lm = test_lm();
        let params = test_params(false);
        let key = mac_key();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let prompt: Vec<u32> = (0..3).map(|_| rng.random_range(0..256)).collect();
            let mut ids = prompt.clone();
            ids.extend(lm.generate_greedy(&prompt, TEST_TAG_BITS + 1));
            assert!(!concealed_detect(&ids, &key, &params.ek_in, lm.vocab(), TEST_TAG_BITS).is_trigger);
        }
    }

    #[test]
    fn wrong_embedding_key_never_detects() {
        let lm = test_lm();
        let params = test_params(false);
        let key = mac_key();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let prompt = random_prompt(&mut rng, lm.vocab(), 3);
            let trigger =
                concealed_trigger_gen(&prompt, &key, &params, &lm, TEST_TAG_BITS).unwrap();
            let wrong_ek = SecretKey::generate(256).unwrap();
            assert!(!concealed_detect(&trigger.full_ids(), &key, &wrong_ek, lm.vocab(), TEST_TAG_BITS)
                .is_trigger);
        }
    }

    #[test]
    fn short_inputs_are_negative() {
        let lm = test_lm();
        let params = test_params(false);
        let ids = vec![1u32; TEST_TAG_BITS + 1];
        assert!(!concealed_detect(&ids, &mac_key(), &params.ek_in, lm.vocab(), TEST_TAG_BITS).is_trigger);
    }

    #[test]
    fn prove_step_identity_branches() {
        let lm = test_lm();
        let params = test_params(false);
        let sigma = crypto::mac_truncated(&mac_key(), b"x", TEST_TAG_BITS).unwrap();
        let logits = lm.logits(&[1, 2, 3]);
        // r = 0 passes through bit-identical
        let out = concealed_prove_step(false, &logits, &sigma, 7, &params).unwrap();
        assert_eq!(out, logits);
        // delta = 0 leaves every logit bit-identical
        let mut zero_delta = params.clone();
        zero_delta.delta = 0.0;
        let out = concealed_prove_step(true, &logits, &sigma, 7, &zero_delta).unwrap();
        assert_eq!(out, logits);
    }

    #[test]
    fn biased_argmax_falls_in_boosted_block() {
        let lm = test_lm();
        let params = test_params(false);
        let key = mac_key();
        let sigma = crypto::mac_truncated(&key, b"tok_1", TEST_TAG_BITS).unwrap();
        let ctx = EvidenceContext::new(&sigma, &params);
        let all: Vec<u32> = (0..256).collect();
        let mut history = vec![1u32];
        for _ in 0..256 {
            let prefix = *history.last().unwrap();
            let logits = lm.logits(&history);
            let biased = concealed_prove_step(true, &logits, &sigma, prefix, &params).unwrap();
            let probs = softmax(&biased);
            let token = sample_constrained(&probs, &all, SamplePolicy::Greedy).unwrap();
            // Re-derive the boosted block and check membership.
            let blocks = permute_and_split(ctx.block_seed(prefix), 256, 16).unwrap();
            let p = ctx.chunk_index(prefix, params.chunk_count());
            let m = chunk_value(&params.message, p, 4);
            assert!(blocks[m].contains(&token));
            history.push(token);
        }
    }

    #[test]
    fn clean_extraction_is_exact() {
        let lm = test_lm();
        let key = mac_key();
        for bind in [false, true] {
            let params = test_params(bind);
            let trigger =
                concealed_trigger_gen("tok_1 tok_2", &key, &params, &lm, TEST_TAG_BITS).unwrap();
            let sigma = crypto::mac_truncated(&key, b"tok_1 tok_2", TEST_TAG_BITS).unwrap();
            let response = forensic_generate(&lm, &trigger.full_ids(), &sigma, &params, 256);
            let report = extract_copyright(
                &response,
                trigger.last_token(),
                &sigma,
                &params,
                256,
                Some(&params.message),
            )
            .unwrap();
            assert_eq!(report.recovered_bits, params.message);
            assert_eq!(report.bit_accuracy, Some(1.0));
            assert!(!report.low_confidence);
        }
    }

    #[test]
    fn all_zero_message_recovers_all_zeros() {
        let lm = test_lm();
        let key = mac_key();
        let mut params = test_params(false);
        params.message = CopyrightMessage::from_bits(vec![false; 32]).unwrap();
        let trigger = concealed_trigger_gen("tok_4", &key, &params, &lm, TEST_TAG_BITS).unwrap();
        let sigma = crypto::mac_truncated(&key, b"tok_4", TEST_TAG_BITS).unwrap();
        let response = forensic_generate(&lm, &trigger.full_ids(), &sigma, &params, 256);
        let report =
            extract_copyright(&response, trigger.last_token(), &sigma, &params, 256, None).unwrap();
        assert_eq!(report.recovered_bits, params.message);
    }

    #[test]
    fn unrelated_tokens_extract_near_chance() {
        let lm = test_lm();
        let key = mac_key();
        let params = test_params(false);
        let sigma = crypto::mac_truncated(&key, b"tok_1", TEST_TAG_BITS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut total_acc = 0.0;
        let trials = 20;
        for _ in 0..trials {
            let response: Vec<u32> = (0..256).map(|_| rng.random_range(0..256)).collect();
            let report =
                extract_copyright(&response, 0, &sigma, &params, 256, Some(&params.message))
                    .unwrap();
            total_acc += report.bit_accuracy.unwrap();
        }
        let lm_unused = lm; // silence unused in this trial
        let _ = lm_unused;
        let mean = total_acc / trials as f64;
        assert!((0.35..=0.65).contains(&mean), "mean accuracy {mean}");
    }

    #[test]
    fn verify_thresholds() {
        let params = test_params(false);
        let exact = ExtractionReport {
            recovered_bits: params.message.clone(),
            tallies: vec![],
            confidence: vec![],
            zero_vote_chunks: vec![],
            low_confidence: false,
            bit_accuracy: Some(1.0),
        };
        assert!(verify_concealed(&params.message, &exact, 1.0).unwrap());
        assert!(verify_concealed(&params.message, &exact, 0.9).unwrap());
        assert!(matches!(
            verify_concealed(&params.message, &exact, 0.4),
            Err(ConcealError::BadThreshold(_))
        ));
        let mut flipped_bits = params.message.bits().to_vec();
        for b in flipped_bits.iter_mut().take(16) {
            *b = !*b;
        }
        let half = ExtractionReport {
            recovered_bits: CopyrightMessage::from_bits(flipped_bits).unwrap(),
            ..exact
        };
        assert!(!verify_concealed(&params.message, &half, 0.9).unwrap());
    }

    #[test]
    fn erasure_degrades_monotonically() {
        let lm = test_lm();
        let key = mac_key();
        let params = test_params(false);
        let trigger = concealed_trigger_gen("tok_2", &key, &params, &lm, TEST_TAG_BITS).unwrap();
        let sigma = crypto::mac_truncated(&key, b"tok_2", TEST_TAG_BITS).unwrap();
        let clean = forensic_generate(&lm, &trigger.full_ids(), &sigma, &params, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut mean_at = |rho: f64| {
            let mut total = 0.0;
            for _ in 0..50 {
                let corrupted: Vec<u32> = clean
                    .iter()
                    .map(|&t| {
                        if rng.random::<f64>() < rho {
                            rng.random_range(0..256)
                        } else {
                            t
                        }
                    })
                    .collect();
                let report = extract_copyright(
                    &corrupted,
                    trigger.last_token(),
                    &sigma,
                    &params,
                    256,
                    Some(&params.message),
                )
                .unwrap();
                total += report.bit_accuracy.unwrap();
            }
            total / 50.0
        };
        let acc0 = mean_at(0.0);
        let acc1 = mean_at(0.1);
        let acc2 = mean_at(0.4);
        assert_eq!(acc0, 1.0);
        assert!(acc0 >= acc1);
        assert!(acc1 >= acc2);
    }

    #[test]
    fn replay_differential() {
        // Genuine evidence for trigger A presented as the response to
        // trigger B: extraction succeeds without key binding and fails with
        // it.
        let lm = test_lm();
        let key = mac_key();
        for (bind, expect_pass) in [(false, true), (true, false)] {
            let params = test_params(bind);
            let trig_a = concealed_trigger_gen("tok_1", &key, &params, &lm, TEST_TAG_BITS).unwrap();
            let sigma_a = crypto::mac_truncated(&key, b"tok_1", TEST_TAG_BITS).unwrap();
            let evidence = forensic_generate(&lm, &trig_a.full_ids(), &sigma_a, &params, 256);

            let trig_b = concealed_trigger_gen("tok_2", &key, &params, &lm, TEST_TAG_BITS).unwrap();
            let sigma_b = crypto::mac_truncated(&key, b"tok_2", TEST_TAG_BITS).unwrap();
            let report = extract_copyright(
                &evidence,
                trig_b.last_token(),
                &sigma_b,
                &params,
                256,
                Some(&params.message),
            )
            .unwrap();
            let pass = verify_concealed(&params.message, &report, 0.9).unwrap();
            assert_eq!(pass, expect_pass, "bind={bind}");
        }
    }

    #[test]
    fn timestamp_round_trip() {
        let c = CopyrightMessage::from_bit_str("1010").unwrap();
        let stamped = c.with_timestamp(29_000_000);
        assert_eq!(stamped.len(), 36);
        let (head, minute) = stamped.split_timestamp().unwrap();
        assert_eq!(head, c);
        assert_eq!(minute, 29_000_000);
    }

    #[test]
    fn params_validation() {
        let mut params = test_params(false);
        params.bits_per_position = 9; // 2^9 > 256
        assert!(params.validate(256).is_err());
        params.bits_per_position = 4;
        assert!(params.validate(256).is_ok());
        params.bits_per_position = 33; // > |c|
        assert!(params.validate(1 << 34).is_err());
    }

    #[test]
    fn record_format_round_trip() {
        let records = vec![vec![1u32, 2, 3], vec![9, 9, 9, 9]];
        let text = write_trigger_records(256, 64, &records);
        let (v, bits, parsed) = read_trigger_records(&text).unwrap();
        assert_eq!(v, 256);
        assert_eq!(bits, 64);
        assert_eq!(parsed, records);
        assert!(read_trigger_records("NOPE 1 2\n").is_err());
    }

    proptest::proptest! {
        #[test]
        fn message_bit_string_round_trip(s in "[01]{1,64}") {
            let c = CopyrightMessage::from_bit_str(&s).unwrap();
            proptest::prop_assert_eq!(c.to_bit_string(), s);
        }
    }
}
