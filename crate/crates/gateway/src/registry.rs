//! One-time trigger registry: linearizable check-and-insert on tag
//! fingerprints so each trigger activates the Forensic path at most once.

use std::collections::HashSet;
use std::sync::Mutex;

use branchwm_core::crypto::Tag;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freshness {
    Fresh,
    Replayed,
}

/// The single mutable structure in the gateway. The mutex is held only for
/// the set probe/insert, never across I/O.
#[derive(Debug, Default)]
pub struct Registry {
    seen: Mutex<HashSet<Vec<u8>>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Atomic: the first caller presenting a tag gets `Fresh`, everyone
    /// after gets `Replayed`.
    pub fn check_and_insert(&self, sigma: &Tag) -> Freshness {
        let mut seen = self.seen.lock().expect("registry mutex poisoned");
        if seen.insert(sigma.as_bytes().to_vec()) {
            Freshness::Fresh
        } else {
            Freshness::Replayed
        }
    }

    pub fn len(&self) -> usize {
        self.seen.lock().expect("registry mutex poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
