use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{Text, World};

/// Bidword → ascending, deduplicated product ids.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    pub postings: BTreeMap<Text, Vec<usize>>,
}

impl InvertedIndex {
    pub fn build(world: &World) -> Self {
        let postings = world.bidwords.iter().map(|b| (b.text.clone(), world.postings(b))).collect();
        Self { postings }
    }

    pub fn get(&self, bidword: &[u32]) -> &[usize] {
        self.postings.get(bidword).map_or(&[], Vec::as_slice)
    }
}

/// Union of posting lists in bidword-rank-then-product-id order, each
/// product kept at its first occurrence along with the bidword that found it.
pub fn retrieve_with_source(bidwords: &[Text], index: &InvertedIndex) -> Vec<(usize, usize)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (rank, b) in bidwords.iter().enumerate() {
        for &p in index.get(b) {
            if seen.insert(p) {
                out.push((p, rank));
            }
        }
    }
    out
}

pub fn retrieve(bidwords: &[Text], index: &InvertedIndex) -> Vec<usize> {
    retrieve_with_source(bidwords, index).into_iter().map(|(p, _)| p).collect()
}
