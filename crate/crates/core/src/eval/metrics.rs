use std::collections::{BTreeMap, HashMap};

use crate::corpus::{cpm, ClickLog, Text, World};
use crate::discriminators::oracle::{oracle_authenticity, oracle_value};
use crate::{Error, Result};

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Precondition("k must be ≥ 1".into()));
    }
    Ok(())
}

/// `|top-k(generated) ∩ golden| / |golden|`.
pub fn recall_at_k(generated: &[Text], golden: &[Text], k: usize) -> Result<f64> {
    check_k(k)?;
    if golden.is_empty() {
        return Err(Error::Precondition("recall needs a non-empty golden set".into()));
    }
    let hits = generated.iter().take(k).filter(|b| golden.contains(b)).count();
    Ok(hits as f64 / golden.len() as f64)
}

/// DCG of a gain list truncated at `k`, positions discounted by `log2(i + 1)`.
pub fn dcg(gains: &[f64], k: usize) -> f64 {
    gains.iter().take(k).enumerate().map(|(i, g)| g / ((i + 2) as f64).log2()).sum()
}

/// NDCG from explicit gains: `gains` follow the generated order, `ideal`
/// holds every available gain in any order.
pub fn ndcg_from_gains(gains: &[f64], ideal: &[f64], k: usize) -> Result<f64> {
    check_k(k)?;
    let mut best = ideal.to_vec();
    best.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&best, k);
    if idcg <= 0.0 {
        return Err(Error::Precondition("ideal DCG is zero".into()));
    }
    Ok(dcg(gains, k) / idcg)
}

/// Graded NDCG: a golden member at 0-based golden rank `r` earns
/// `|golden| − r`, anything else earns 0.
pub fn ndcg_at_k(generated: &[Text], golden: &[Text], k: usize) -> Result<f64> {
    check_k(k)?;
    if golden.is_empty() {
        return Err(Error::Precondition("ndcg needs a non-empty golden list".into()));
    }
    let n = golden.len() as f64;
    let gain = |b: &Text| golden.iter().position(|g| g == b).map_or(0.0, |r| n - r as f64);
    let gains: Vec<f64> = generated.iter().take(k).map(gain).collect();
    let ideal: Vec<f64> = (0..golden.len()).map(|r| n - r as f64).collect();
    ndcg_from_gains(&gains, &ideal, k)
}

/// Oracle relevance, authenticity and mean value over every generated
/// (query, bidword) pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QualityRates {
    pub relevance_rate: f64,
    pub authenticity_rate: f64,
    pub mean_value: f64,
    pub n_generated: usize,
}

pub fn quality_rates(
    world: &World,
    freqs: &HashMap<Text, u64>,
    auth_threshold: u64,
    generated: &BTreeMap<Text, Vec<Text>>,
) -> QualityRates {
    let (mut n, mut rel, mut au, mut val) = (0usize, 0usize, 0usize, 0.0);
    for (q, bs) in generated {
        for b in bs {
            n += 1;
            rel += world.relevance(q, b).is_relevant() as usize;
            au += oracle_authenticity(world, freqs, b, auth_threshold) as usize;
            val += oracle_value(world, b);
        }
    }
    if n == 0 {
        return QualityRates::default();
    }
    QualityRates {
        relevance_rate: rel as f64 / n as f64,
        authenticity_rate: au as f64 / n as f64,
        mean_value: val / n as f64,
        n_generated: n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BusinessMetrics {
    pub cpc: f64,
    pub cpm: f64,
    pub impressions: u64,
    pub clicks: u64,
    pub revenue: f64,
}

impl BusinessMetrics {
    pub fn from_totals(impressions: u64, clicks: u64, revenue: f64) -> Self {
        let cpc = if clicks == 0 { 0.0 } else { revenue / clicks as f64 };
        Self { cpc, cpm: cpm(revenue, impressions), impressions, clicks, revenue }
    }
}

pub fn business_metrics(logs: &ClickLog) -> BusinessMetrics {
    let (mut imp, mut clk, mut rev) = (0u64, 0u64, 0.0);
    for r in &logs.records {
        imp += r.impressions;
        clk += r.clicks;
        rev += r.revenue;
    }
    BusinessMetrics::from_totals(imp, clk, rev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ClickLogRecord;
    use proptest::prelude::*;

    fn t(i: u32) -> Text {
        vec![i]
    }

    #[test]
    fn recall_examples() {
        let golden: Vec<Text> = (0..10).map(t).collect();
        let generated = vec![t(3), t(99), t(7)];
        assert_eq!(recall_at_k(&generated, &golden, 3).unwrap(), 0.2);
        let mut shuffled = golden.clone();
        shuffled.reverse();
        assert_eq!(recall_at_k(&shuffled, &golden, 10).unwrap(), 1.0);
        assert!(recall_at_k(&generated, &golden, 0).is_err());
        assert!(recall_at_k(&generated, &[], 3).is_err());
    }

    #[test]
    fn worked_binary_ndcg() {
        let v = ndcg_from_gains(&[1.0, 0.0, 1.0], &[1.0, 1.0], 3).unwrap();
        let expected = 1.5 / (1.0 + 1.0 / 3f64.log2());
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.9197).abs() < 5e-5);
    }

    #[test]
    fn ndcg_bounds() {
        let golden: Vec<Text> = (0..10).map(t).collect();
        assert_eq!(ndcg_at_k(&golden, &golden, 10).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&[t(50), t(51)], &golden, 10).unwrap(), 0.0);
        assert!(ndcg_at_k(&golden, &golden, 0).is_err());
    }

    #[test]
    fn business_metric_conventions() {
        let m = BusinessMetrics::from_totals(1000, 10, 5.0);
        assert_eq!((m.cpc, m.cpm), (0.5, 5.0));
        assert_eq!(business_metrics(&ClickLog { queries: vec![], records: vec![] }), BusinessMetrics::default());
        let logs = ClickLog {
            queries: vec![],
            records: vec![ClickLogRecord { query: t(4), bidword: t(5), product: 0, impressions: 400, clicks: 4, revenue: 2.0 }],
        };
        let m = business_metrics(&logs);
        assert_eq!((m.cpc, m.cpm, m.impressions), (0.5, 5.0, 400));
    }

    proptest! {
        #[test]
        fn tail_beyond_k_is_irrelevant(
            head in proptest::collection::vec(0u32..30, 0..6),
            tail_a in proptest::collection::vec(0u32..30, 0..6),
            tail_b in proptest::collection::vec(0u32..30, 0..6),
            golden in proptest::collection::btree_set(0u32..30, 1..10),
        ) {
            let k = head.len().max(1);
            let golden: Vec<Text> = golden.into_iter().map(t).collect();
            let a: Vec<Text> = head.iter().chain(&tail_a).map(|&i| t(i)).collect();
            let b: Vec<Text> = head.iter().chain(&tail_b).map(|&i| t(i)).collect();
            if head.len() >= 1 {
                prop_assert_eq!(recall_at_k(&a, &golden, k).unwrap(), recall_at_k(&b, &golden, k).unwrap());
                prop_assert_eq!(ndcg_at_k(&a, &golden, k).unwrap(), ndcg_at_k(&b, &golden, k).unwrap());
            }
            let n = ndcg_at_k(&a, &golden, k).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
            prop_assert_eq!(ndcg_at_k(&golden, &golden, golden.len()).unwrap(), 1.0);
        }
    }
}
