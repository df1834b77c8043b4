//! Deterministic pseudo language model and sampling utilities.
//!
//! Scores come from a keyed hash of `(model_seed, recent history, token)`
//! mapped into `[-5, 5]`, so the full generation pipeline is a pure function
//! of `(model_seed, history)` and tests can be bit-exact. Any additive bias
//! larger than the logit range forces the greedy argmax into the biased set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::Vocab;

/// Unbiased logits lie in this closed interval.
pub const LOGIT_RANGE: (f64, f64) = (-5.0, 5.0);

#[derive(Debug, Error)]
pub enum LmError {
    #[error("allowed token set is empty")]
    EmptyAllowedSet,
    #[error("perplexity needs at least one token")]
    EmptySequence,
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic pseudo language model over a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct ToyLm {
    model_seed: u64,
    vocab: Vocab,
    context_window: usize,
}

impl ToyLm {
    pub fn new(model_seed: u64, vocab: Vocab) -> Self {
        Self {
            model_seed,
            vocab,
            context_window: 4,
        }
    }

    pub fn with_context_window(mut self, context_window: usize) -> Self {
        assert!(context_window >= 1);
        self.context_window = context_window;
        self
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.size()
    }

    /// Pre-softmax scores for every token given the history. Only the last
    /// `context_window` ids matter; the empty history is well-defined.
    pub fn logits(&self, history: &[u32]) -> Vec<f64> {
        let start = history.len().saturating_sub(self.context_window);
        let mut h = splitmix64(self.model_seed);
        for &id in &history[start..] {
            h = splitmix64(h ^ (id as u64).wrapping_add(0x517cc1b727220a95));
        }
        (0..self.vocab.size() as u64)
            .map(|j| {
                let unit = (splitmix64(h ^ j) >> 11) as f64 / (1u64 << 53) as f64;
                unit * (LOGIT_RANGE.1 - LOGIT_RANGE.0) + LOGIT_RANGE.0
            })
            .collect()
    }

    /// exp(mean negative log-probability of each token given its prefix).
    pub fn perplexity(&self, tokens: &[u32]) -> Result<f64, LmError> {
        self.perplexity_with_context(&[], tokens)
    }

    /// Same, but each prefix starts from `context` (the prompt).
    pub fn perplexity_with_context(&self, context: &[u32], tokens: &[u32]) -> Result<f64, LmError> {
        if tokens.is_empty() {
            return Err(LmError::EmptySequence);
        }
        let mut history = context.to_vec();
        let mut nll = 0.0;
        for &token in tokens {
            let probs = softmax(&self.logits(&history));
            nll -= probs[token as usize].ln();
            history.push(token);
        }
        Ok((nll / tokens.len() as f64).exp())
    }

    /// Greedy continuation of `prompt` by `n` tokens; returns only the
    /// generated tokens.
    pub fn generate_greedy(&self, prompt: &[u32], n: usize) -> Vec<u32> {
        let all: Vec<u32> = (0..self.vocab.size() as u32).collect();
        let mut history = prompt.to_vec();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let probs = softmax(&self.logits(&history));
            let next = sample_constrained(&probs, &all, SamplePolicy::Greedy)
                .expect("full vocabulary is nonempty");
            history.push(next);
            out.push(next);
        }
        out
    }
}

/// Numerically stable softmax (max subtraction); output sums to 1.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, Copy)]
pub enum SamplePolicy {
    /// Allowed id of maximal probability, ties broken by smallest id.
    Greedy,
    /// Renormalize over the allowed set and draw with this seed.
    Multinomial { seed: u64 },
}

/// Draw a token from `allowed` under the given policy. Never escapes the
/// allowed set.
pub fn sample_constrained(
    probs: &[f64],
    allowed: &[u32],
    policy: SamplePolicy,
) -> Result<u32, LmError> {
    if allowed.is_empty() {
        return Err(LmError::EmptyAllowedSet);
    }
    match policy {
        SamplePolicy::Greedy => {
            let mut best = allowed[0];
            let mut best_p = probs[best as usize];
            for &id in &allowed[1..] {
                let p = probs[id as usize];
                if p > best_p || (p == best_p && id < best) {
                    best = id;
                    best_p = p;
                }
            }
            Ok(best)
        }
        SamplePolicy::Multinomial { seed } => {
            let total: f64 = allowed.iter().map(|&id| probs[id as usize]).sum();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut target = rng.random::<f64>() * total;
            for &id in allowed {
                target -= probs[id as usize];
                if target <= 0.0 {
                    return Ok(id);
                }
            }
            Ok(*allowed.last().unwrap())
        }
    }
}
