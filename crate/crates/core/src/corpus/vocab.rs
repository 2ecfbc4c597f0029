//! Frequency-capped vocabulary over lowercased token types.

use super::TokenizedExample;
use crate::rng::splitmix64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocab {
    ids: HashMap<String, u32>,
    size: usize,
}

impl Vocab {
    /// Builds a vocabulary of the `size_cap - 2` most frequent lowercased
    /// token types (ids 0 and 1 are PAD and UNK). Frequency ties break
    /// lexicographically. `size_cap` must be at least 2.
    pub fn build(examples: &[TokenizedExample], size_cap: usize) -> Vocab {
        assert!(size_cap >= 2, "size_cap must be >= 2");
        let mut counts: HashMap<String, u64> = HashMap::new();
        for ex in examples {
            for tok in ex.context_tokens.iter().chain(ex.question_tokens.iter()) {
                *counts.entry(tok.text.to_lowercase()).or_insert(0) += 1;
            }
        }
        let mut types: Vec<(String, u64)> = counts.into_iter().collect();
        types.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        types.truncate(size_cap - 2);
        let ids: HashMap<String, u32> = types
            .into_iter()
            .enumerate()
            .map(|(i, (t, _))| (t, i as u32 + 2))
            .collect();
        let size = ids.len() + 2;
        Vocab { ids, size }
    }

    pub fn id(&self, token_text: &str) -> u32 {
        self.ids
            .get(&token_text.to_lowercase())
            .copied()
            .unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token_text: &str) -> bool {
        self.ids.contains_key(&token_text.to_lowercase())
    }

    /// Total size including PAD and UNK.
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Order-independent content hash, used to pair checkpoints with the
    /// vocabulary they were trained under.
    pub fn hash(&self) -> u64 {
        let mut entries: Vec<(&String, &u32)> = self.ids.iter().collect();
        entries.sort();
        let mut acc: u64 = 0x243f_6a88_85a3_08d3;
        for (text, id) in entries {
            for chunk in text.as_bytes().chunks(8) {
                let mut w = [0u8; 8];
                w[..chunk.len()].copy_from_slice(chunk);
                acc ^= u64::from_le_bytes(w);
                acc = splitmix64(&mut acc);
            }
            acc ^= *id as u64;
            acc = splitmix64(&mut acc);
        }
        acc
    }
}
