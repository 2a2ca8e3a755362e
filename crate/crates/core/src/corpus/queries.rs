use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use super::vocab::{Text, TokenId};
use super::world::{NodeId, World};
use crate::util::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Head,
    Middle,
    Tail,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::Head => "head",
            Tier::Middle => "middle",
            Tier::Tail => "tail",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Tier::Head, Tier::Middle, Tier::Tail].into_iter().find(|t| t.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub text: Text,
    pub frequency: u64,
    pub intent_category: NodeId,
    pub tier: Tier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryStreamConfig {
    pub n_unique: usize,
    pub total_events: u64,
    pub zipf_s: f64,
    /// Rank quantile boundaries: the first `head_fraction` of ranks are
    /// head, the next `middle_fraction` middle, the rest tail.
    pub head_fraction: f64,
    pub middle_fraction: f64,
    /// Probability that a composed query carries a corrupted token.
    pub corruption_prob: f64,
}

impl Default for QueryStreamConfig {
    fn default() -> Self {
        Self {
            n_unique: 20_000,
            total_events: 2_000_000,
            zipf_s: 1.0,
            head_fraction: 0.1,
            middle_fraction: 0.3,
            corruption_prob: 0.15,
        }
    }
}

impl QueryStreamConfig {
    pub fn tier_of_rank(&self, rank: usize) -> Tier {
        let n = self.n_unique as f64;
        let r = rank as f64;
        if r < (self.head_fraction * n).ceil() {
            Tier::Head
        } else if r < ((self.head_fraction + self.middle_fraction) * n).ceil() {
            Tier::Middle
        } else {
            Tier::Tail
        }
    }
}

struct Candidate {
    text: Text,
    node: NodeId,
    prior: f64,
}

/// Samples `n_unique` distinct queries with Zipf(s) rank-frequency.
///
/// Every query gets one event; the remaining `total_events − n_unique`
/// events are drawn from Zipf over ranks. Ranks are assigned by a
/// naturalness prior (plain category names first, then attribute + name,
/// then longer and corrupted compositions) with random jitter. The result is
/// sorted by frequency descending, ties by text.
pub fn sample_query_stream(world: &World, config: &QueryStreamConfig, seed: u64) -> Result<Vec<QueryRecord>> {
    let n = config.n_unique;
    if n < 3 || config.zipf_s <= 0.0 || config.total_events < n as u64 {
        return Err(Error::Precondition(
            "need n_unique ≥ 3, zipf_s > 0 and total_events ≥ n_unique".into(),
        ));
    }
    let mut rng = rng(seed);
    let mut seen: HashSet<Text> = HashSet::new();
    let mut candidates: Vec<Candidate> = Vec::with_capacity(n);

    let mut short = Vec::new();
    for node in &world.nodes {
        for form in &node.surface_forms {
            short.push(Candidate { text: form.clone(), node: node.id, prior: 3.0 });
            for &a in &world.node_attributes[node.id] {
                let mut text = vec![a];
                text.extend_from_slice(form);
                short.push(Candidate { text, node: node.id, prior: 2.5 });
            }
        }
    }
    short.shuffle(&mut rng);
    for c in short.into_iter().take(n) {
        seen.insert(c.text.clone());
        candidates.push(c);
    }

    let mut attempts = 0usize;
    while candidates.len() < n {
        attempts += 1;
        if attempts > 200 * n + 10_000 {
            return Err(Error::Precondition(format!(
                "world cannot form {n} distinct queries (got {})",
                candidates.len()
            )));
        }
        let node = &world.nodes[rng.random_range(0..world.nodes.len())];
        let form = node.surface_forms.choose(&mut rng).expect("non-empty surface forms");
        let own = &world.node_attributes[node.id];
        let n_attr = rng.random_range(1..=2usize);
        let mut attrs: Vec<TokenId> = own.choose_multiple(&mut rng, n_attr.min(own.len())).copied().collect();
        let mut prior = 1.0;
        if rng.random_bool(config.corruption_prob) {
            prior = 0.0;
            if rng.random_bool(0.5) {
                let foreign: Vec<TokenId> =
                    world.attribute_pool.iter().copied().filter(|a| !own.contains(a)).collect();
                match foreign.choose(&mut rng) {
                    Some(&f) => attrs[0] = f,
                    None => attrs.push(*world.noise_pool.choose(&mut rng).expect("noise pool")),
                }
            } else {
                let noise = *world.noise_pool.choose(&mut rng).expect("noise pool");
                let at = rng.random_range(0..=attrs.len());
                attrs.insert(at, noise);
            }
        } else if attrs.len() < 2 {
            continue;
        }
        let mut text = attrs;
        text.extend_from_slice(form);
        if seen.insert(text.clone()) {
            candidates.push(Candidate { text, node: node.id, prior });
        }
    }

    let mut keyed: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (c.prior + rng.random_range(0.0..2.0), i))
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut freq = vec![1u64; n];
    let zipf = Zipf::new(n as f64, config.zipf_s).map_err(|e| Error::Precondition(e.to_string()))?;
    for _ in 0..(config.total_events - n as u64) {
        let rank = zipf.sample(&mut rng) as usize;
        freq[rank.clamp(1, n) - 1] += 1;
    }

    let mut records: Vec<QueryRecord> = keyed
        .iter()
        .zip(&freq)
        .map(|(&(_, i), &f)| QueryRecord {
            text: candidates[i].text.clone(),
            frequency: f,
            intent_category: candidates[i].node,
            tier: crate::corpus::Tier::Tail,
        })
        .collect();
    records.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.text.cmp(&b.text)));
    for (rank, r) in records.iter_mut().enumerate() {
        r.tier = config.tier_of_rank(rank);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_world, WorldConfig};

    fn world() -> World {
        build_world(&WorldConfig::default(), 11).unwrap()
    }

    #[test]
    fn events_equal_unique_gives_unit_frequencies() {
        let cfg = QueryStreamConfig { n_unique: 10, total_events: 10, ..Default::default() };
        let qs = sample_query_stream(&world(), &cfg, 1).unwrap();
        assert_eq!(qs.len(), 10);
        assert!(qs.iter().all(|q| q.frequency == 1));
    }

    #[test]
    fn rank_one_is_head_and_tiers_follow_quantiles() {
        let cfg = QueryStreamConfig { n_unique: 1000, total_events: 50_000, ..Default::default() };
        let qs = sample_query_stream(&world(), &cfg, 2).unwrap();
        assert_eq!(qs[0].tier, Tier::Head);
        assert_eq!(qs.iter().filter(|q| q.tier == Tier::Head).count(), 100);
        assert_eq!(qs.iter().filter(|q| q.tier == Tier::Middle).count(), 300);
        assert!(qs.windows(2).all(|w| w[0].frequency >= w[1].frequency));
        assert_eq!(qs.iter().map(|q| q.frequency).sum::<u64>(), 50_000);
    }

    #[test]
    fn queries_are_distinct_and_mappable() {
        let cfg = QueryStreamConfig { n_unique: 3000, total_events: 10_000, ..Default::default() };
        let w = world();
        let qs = sample_query_stream(&w, &cfg, 3).unwrap();
        let set: HashSet<_> = qs.iter().map(|q| q.text.clone()).collect();
        assert_eq!(set.len(), qs.len());
        for q in &qs {
            assert_eq!(w.node_of(&q.text), Some(q.intent_category));
            assert!(q.frequency >= 1);
        }
    }

    #[test]
    fn rejects_bad_preconditions() {
        let w = world();
        let bad = |cfg: QueryStreamConfig| sample_query_stream(&w, &cfg, 0).is_err();
        assert!(bad(QueryStreamConfig { n_unique: 2, total_events: 10, ..Default::default() }));
        assert!(bad(QueryStreamConfig { n_unique: 10, total_events: 9, ..Default::default() }));
        assert!(bad(QueryStreamConfig { n_unique: 10, total_events: 10, zipf_s: 0.0, ..Default::default() }));
    }
}
