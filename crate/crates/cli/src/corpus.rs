//! The fixed 500-line prompt corpus and the vocabulary derived from it.
//!
//! The corpus ships inside the binary so triad runs are reproducible
//! everywhere. The vocabulary is every distinct word of the corpus in order
//! of first appearance, which guarantees that every corpus prompt
//! tokenizes under the gateway's reversible tokenizer.

use branchwm_core::codec::Vocab;

pub const PROMPTS_TEXT: &str = include_str!("../data/prompts.txt");

/// The 500 corpus prompts.
pub fn prompts() -> Vec<&'static str> {
    PROMPTS_TEXT.lines().collect()
}

/// Distinct corpus words in order of first appearance.
pub fn vocab() -> Vocab {
    let mut words: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for line in PROMPTS_TEXT.lines() {
        for word in line.split(' ') {
            if seen.insert(word) {
                words.push(word.to_owned());
            }
        }
    }
    Vocab::from_surfaces(words).expect("corpus words are distinct and separator-free")
}
