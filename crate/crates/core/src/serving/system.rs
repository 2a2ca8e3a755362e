use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cache::{generate_bidwords, BidwordCache};
use super::index::{retrieve_with_source, InvertedIndex};
use crate::alignment::relevance_reward;
use crate::corpus::{RelevanceLabel, Text, TokenId, World};
use crate::discriminators::RelevanceModel;
use crate::policy::{DecodeConfig, PolicyModel};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServingConfig {
    /// Most frequent queries that get a precomputed entry.
    pub cache_queries: usize,
    pub bidwords_per_query: usize,
    /// Extra sampling draws allowed when padding a rewrite list.
    pub sample_retries: usize,
    /// Relevance-reward threshold of the filter stage.
    pub min_reward: f64,
    pub filter_enabled: bool,
    /// Ad slots filled per search during traffic replay.
    pub ad_slots: usize,
    /// Queries replayed through both arms.
    pub replay_queries: usize,
    pub split: TrafficSplit,
    pub seed: u64,
}

/// How the replayed stream is divided between the two arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficSplit {
    /// Every query goes through both arms with the same click draws.
    Mirror,
    /// Deterministic interleaving: a `b_fraction` share of the stream, spread
    /// evenly, goes to arm B and the rest to arm A.
    Interleave { b_fraction: f64 },
}

impl TrafficSplit {
    /// Which arms see query `i`: `(a, b)`.
    pub fn route(self, i: usize) -> (bool, bool) {
        match self {
            TrafficSplit::Mirror => (true, true),
            TrafficSplit::Interleave { b_fraction } => {
                let f = b_fraction.clamp(0.0, 1.0);
                let b = ((i + 1) as f64 * f).floor() > (i as f64 * f).floor();
                (!b, b)
            }
        }
    }
}

impl Default for ServingConfig {
    fn default() -> Self {
        Self {
            cache_queries: 300,
            bidwords_per_query: 15,
            sample_retries: 60,
            min_reward: 0.0,
            filter_enabled: true,
            ad_slots: 10,
            replay_queries: 1000,
            split: TrafficSplit::Mirror,
            seed: 0,
        }
    }
}

/// What happened to one request.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestTrace {
    pub query: Text,
    pub cache_hit: bool,
    pub considered: usize,
    pub filtered: usize,
    pub surviving: usize,
    /// Surviving bidwords with their relevance reward, best first.
    pub bidwords: Vec<(Text, f64)>,
    /// `(product id, rank of the bidword that retrieved it)`.
    pub products: Vec<(usize, usize)>,
    pub latency_us: u64,
}

/// Drops bidwords whose relevance reward is below `min_reward`; survivors
/// are sorted by reward descending, ties by token order.
pub fn filter_and_sort(
    query: &[TokenId],
    bidwords: &[Text],
    relevance: &RelevanceModel,
    min_reward: f64,
) -> Vec<(Text, f64)> {
    let mut out: Vec<(Text, f64)> = bidwords
        .iter()
        .map(|b| (b.clone(), relevance_reward(relevance, query, b)))
        .filter(|(_, r)| *r >= min_reward)
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Cache lookup with real-time generation as the fallback.
pub fn rewrite(
    query: &[TokenId],
    cache: &BidwordCache,
    model: &PolicyModel,
    decode: &DecodeConfig,
    config: &ServingConfig,
) -> Result<(Vec<Text>, bool)> {
    if let Some(hit) = cache.get(query) {
        return Ok((hit.clone(), true));
    }
    let (bs, _) = generate_bidwords(model, query, decode, config.bidwords_per_query, config.sample_retries, config.seed)?;
    Ok((bs, false))
}

/// One deployed rewrite channel: model, cache, filter and index.
pub struct ServingSystem<'a> {
    pub world: &'a World,
    pub model: &'a PolicyModel,
    pub relevance: &'a RelevanceModel,
    pub cache: BidwordCache,
    pub index: &'a InvertedIndex,
    pub decode: DecodeConfig,
    pub config: ServingConfig,
}

impl ServingSystem<'_> {
    /// rewrite → filter_and_sort → retrieve → intent filter.
    pub fn handle_request(&self, query: &[TokenId]) -> Result<RequestTrace> {
        let start = Instant::now();
        let (bidwords, cache_hit) = rewrite(query, &self.cache, self.model, &self.decode, &self.config)?;
        let considered = bidwords.len();
        let min = if self.config.filter_enabled { self.config.min_reward } else { f64::NEG_INFINITY };
        let ranked = filter_and_sort(query, &bidwords, self.relevance, min);
        let texts: Vec<Text> = ranked.iter().map(|(b, _)| b.clone()).collect();
        let qnode = self.world.node_of(query);
        let products = retrieve_with_source(&texts, self.index)
            .into_iter()
            .filter(|&(p, _)| {
                qnode.is_some_and(|q| {
                    self.world.relation(q, self.world.products[p].leaf_category) != RelevanceLabel::Incorrect
                })
            })
            .collect();
        Ok(RequestTrace {
            query: query.to_vec(),
            cache_hit,
            considered,
            filtered: considered - ranked.len(),
            surviving: ranked.len(),
            bidwords: ranked,
            products,
            latency_us: (start.elapsed().as_micros() as u64).max(1),
        })
    }
}
