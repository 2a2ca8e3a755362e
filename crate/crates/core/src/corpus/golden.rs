use std::collections::BTreeMap;

use super::clicks::ClickLog;
use super::vocab::Text;
use super::world::World;

/// Query → its `k` most valuable bidwords, best first.
pub type GoldenSet = BTreeMap<Text, Vec<Text>>;

/// Per query, every clicked bidword with its value score `clicks × true_cpm`.
pub fn golden_value_scores(world: &World, logs: &ClickLog) -> BTreeMap<Text, Vec<(Text, f64)>> {
    let mut clicks: BTreeMap<Text, BTreeMap<Text, u64>> = BTreeMap::new();
    for r in &logs.records {
        *clicks.entry(r.query.clone()).or_default().entry(r.bidword.clone()).or_insert(0) += r.clicks;
    }
    clicks
        .into_iter()
        .map(|(q, per_b)| {
            let scored = per_b
                .into_iter()
                .filter(|(_, c)| *c > 0)
                .map(|(b, c)| {
                    let value = world.bidword(&b).map_or(0.0, |bw| bw.true_cpm);
                    (b, c as f64 * value)
                })
                .collect();
            (q, scored)
        })
        .collect()
}

/// Ranks each query's clicked bidwords by `clicks × true_cpm` (ties by
/// token order) and keeps queries with at least `k` of them.
pub fn build_golden_set(world: &World, logs: &ClickLog, k: usize) -> GoldenSet {
    assert!(k >= 1, "golden k must be ≥ 1");
    golden_value_scores(world, logs)
        .into_iter()
        .filter_map(|(q, mut scored)| {
            if scored.len() < k {
                return None;
            }
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            Some((q, scored.into_iter().take(k).map(|(b, _)| b).collect()))
        })
        .collect()
}
