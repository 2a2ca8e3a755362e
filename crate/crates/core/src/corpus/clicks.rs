use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::seq::{IndexedRandom, SliceRandom};
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::queries::QueryRecord;
use super::vocab::Text;
use super::world::{RelevanceLabel, World};
use crate::util::{derive_seed, rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClickConfig {
    pub base_ctr: f64,
    /// Click multiplier per relevance label, in label order
    /// (synonym, hypernym→hyponym, hyponym→hypernym, incorrect).
    pub relevance_factor: [f64; 4],
    /// Cap on related bidwords shown per query.
    pub max_related_ads: usize,
    /// Unrelated bidwords shown per query (exploration traffic).
    pub incorrect_ads: usize,
    pub impressions_per_search: u64,
}

impl Default for ClickConfig {
    fn default() -> Self {
        Self {
            base_ctr: 0.05,
            relevance_factor: [1.0, 0.6, 0.6, 0.02],
            max_related_ads: 40,
            incorrect_ads: 1,
            impressions_per_search: 1,
        }
    }
}

impl ClickConfig {
    pub fn click_probability(&self, label: RelevanceLabel, popularity: f64) -> f64 {
        (self.base_ctr * self.relevance_factor[label.index()] * popularity).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickLogRecord {
    pub query: Text,
    pub bidword: Text,
    pub product: usize,
    pub impressions: u64,
    pub clicks: u64,
    pub revenue: f64,
}

/// The search stream together with the ad impressions it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickLog {
    pub queries: Vec<QueryRecord>,
    pub records: Vec<ClickLogRecord>,
}

impl ClickLog {
    /// Per-bidword (impressions, revenue) totals.
    pub fn bidword_totals(&self) -> HashMap<&[u32], (u64, f64)> {
        let mut totals: HashMap<&[u32], (u64, f64)> = HashMap::new();
        for r in &self.records {
            let e = totals.entry(r.bidword.as_slice()).or_default();
            e.0 += r.impressions;
            e.1 += r.revenue;
        }
        totals
    }
}

/// CPM with the zero-impression convention.
pub fn cpm(revenue: f64, impressions: u64) -> f64 {
    if impressions == 0 {
        0.0
    } else {
        1000.0 * revenue / impressions as f64
    }
}

/// Simulates ad impressions and clicks for every query and back-fills each
/// bidword's `true_cpm` from the resulting log.
///
/// A query is shown up to `max_related_ads` related bidwords (closest
/// relation first) plus `incorrect_ads` unrelated ones. Each shown bidword
/// displays one product from its postings, drawn by popularity; clicks are
/// binomial with `base_ctr × relevance_factor × popularity`.
pub fn simulate_clicks(
    world: &mut World,
    queries: Vec<QueryRecord>,
    config: &ClickConfig,
    seed: u64,
) -> Result<ClickLog> {
    if queries.is_empty() {
        return Err(Error::Precondition("simulate_clicks needs at least one query".into()));
    }
    let postings: Vec<Vec<usize>> = world.bidwords.iter().map(|b| world.postings(b)).collect();
    let mut records = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        let mut rng = rng(derive_seed(seed, &format!("query-{qi}")));
        let mut by_label: [Vec<usize>; 4] = Default::default();
        for (bi, b) in world.bidwords.iter().enumerate() {
            if !postings[bi].is_empty() {
                by_label[world.relation(q.intent_category, b.category).index()].push(bi);
            }
        }
        let mut shown: Vec<usize> = Vec::new();
        for group in by_label.iter_mut().take(3) {
            group.shuffle(&mut rng);
            let room = config.max_related_ads - shown.len();
            shown.extend(group.iter().take(room).copied());
        }
        shown.extend(by_label[3].choose_multiple(&mut rng, config.incorrect_ads).copied());

        let impressions = q.frequency * config.impressions_per_search;
        for bi in shown {
            let b = &world.bidwords[bi];
            let weights: Vec<f64> = postings[bi].iter().map(|&p| world.products[p].popularity).collect();
            let pick = WeightedIndex::new(&weights).map_err(|e| Error::Precondition(e.to_string()))?;
            let product = postings[bi][pick.sample(&mut rng)];
            let label = world.relevance(&q.text, &b.text);
            let p = config.click_probability(label, world.products[product].popularity);
            let clicks = Binomial::new(impressions, p)
                .map_err(|e| Error::Precondition(e.to_string()))?
                .sample(&mut rng);
            records.push(ClickLogRecord {
                query: q.text.clone(),
                bidword: b.text.clone(),
                product,
                impressions,
                clicks,
                revenue: clicks as f64 * b.bid,
            });
        }
    }
    let log = ClickLog { queries, records };
    let totals = log.bidword_totals();
    for b in &mut world.bidwords {
        let (imp, rev) = totals.get(b.text.as_slice()).copied().unwrap_or((0, 0.0));
        b.true_cpm = cpm(rev, imp);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_world, sample_query_stream, QueryStreamConfig, WorldConfig};

    fn small() -> (World, Vec<QueryRecord>) {
        let w = build_world(&WorldConfig::default(), 5).unwrap();
        let qcfg = QueryStreamConfig { n_unique: 400, total_events: 40_000, ..Default::default() };
        let qs = sample_query_stream(&w, &qcfg, 6).unwrap();
        (w, qs)
    }

    #[test]
    fn cpm_conventions() {
        assert_eq!(cpm(0.0, 0), 0.0);
        assert_eq!(cpm(4.0, 2000), 2.0);
    }

    #[test]
    fn log_accounting() {
        let (mut w, qs) = small();
        let log = simulate_clicks(&mut w, qs, &ClickConfig::default(), 9).unwrap();
        for r in &log.records {
            assert!(r.clicks <= r.impressions);
            let bid = w.bidword(&r.bidword).unwrap().bid;
            assert_eq!(r.revenue, r.clicks as f64 * bid);
        }
        let shown: std::collections::HashSet<_> = log.records.iter().map(|r| r.bidword.clone()).collect();
        for b in &w.bidwords {
            if !shown.contains(&b.text) {
                assert_eq!(b.true_cpm, 0.0);
            }
        }
    }

    #[test]
    fn doubling_a_bid_doubles_its_revenue() {
        let (mut w1, qs) = small();
        let mut w2 = w1.clone();
        let target = w1.bidwords[0].text.clone();
        w2.bidwords[0].bid = 2.0 * w1.bidwords[0].bid;
        let l1 = simulate_clicks(&mut w1, qs.clone(), &ClickConfig::default(), 1).unwrap();
        let l2 = simulate_clicks(&mut w2, qs, &ClickConfig::default(), 1).unwrap();
        let mut any = false;
        for (a, b) in l1.records.iter().zip(&l2.records) {
            assert_eq!(a.clicks, b.clicks);
            if a.bidword == target {
                assert_eq!(b.revenue, 2.0 * a.revenue);
                any |= a.clicks > 0;
            }
        }
        assert!(any);
    }
}
