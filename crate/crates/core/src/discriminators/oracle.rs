//! Ground-truth twins of the three discriminators.

use std::collections::HashMap;

use crate::corpus::{authenticity_label, RelevanceLabel, Text, TokenId, World};

/// One-hot relevance from the category tree.
pub fn oracle_relevance(world: &World, query: &[TokenId], bidword: &[TokenId]) -> [f64; 4] {
    let mut out = [0.0; 4];
    out[world.relevance(query, bidword).index()] = 1.0;
    out
}

pub fn oracle_label(world: &World, query: &[TokenId], bidword: &[TokenId]) -> RelevanceLabel {
    world.relevance(query, bidword)
}

/// 1 iff `bidword` is in the inventory and searched more than `threshold` times.
pub fn oracle_authenticity(world: &World, freqs: &HashMap<Text, u64>, bidword: &[TokenId], threshold: u64) -> u8 {
    authenticity_label(world, freqs, bidword, threshold)
}

/// The bidword's simulated CPM; 0 for text outside the inventory.
pub fn oracle_value(world: &World, bidword: &[TokenId]) -> f64 {
    world.bidword(bidword).map_or(0.0, |b| b.true_cpm)
}
