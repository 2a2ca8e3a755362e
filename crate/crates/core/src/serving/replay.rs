use rand_distr::{Binomial, Distribution};

use super::system::{RequestTrace, ServingSystem};
use crate::corpus::{ClickConfig, QueryRecord};
use crate::eval::BusinessMetrics;
use crate::util::{derive_seed, rng};
use crate::{Error, Result};

/// Per-arm traffic totals and B-relative-to-A changes in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub a: BusinessMetrics,
    pub b: BusinessMetrics,
    pub delta_cpm_pct: f64,
    pub delta_revenue_pct: f64,
    pub delta_cpc_pct: f64,
    pub delta_clicks_pct: f64,
    pub cache_hits: (usize, usize),
}

fn pct(b: f64, a: f64) -> f64 {
    if a == 0.0 {
        if b == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * (b - a) / a
    }
}

/// Shows the first `ad_slots` retrieved products for every search and
/// draws clicks from the corpus click model.
fn serve_clicks(
    sys: &ServingSystem,
    trace: &RequestTrace,
    record: &QueryRecord,
    clicks: &ClickConfig,
    seed: u64,
) -> Result<(u64, u64, f64)> {
    let mut r = rng(seed);
    let (mut imp, mut clk, mut rev) = (0u64, 0u64, 0.0);
    let impressions = record.frequency * clicks.impressions_per_search;
    for &(p, rank) in trace.products.iter().take(sys.config.ad_slots) {
        let product = &sys.world.products[p];
        let label = sys.world.relation(record.intent_category, product.leaf_category);
        let bid = sys.world.bidword(&trace.bidwords[rank].0).map_or(0.0, |b| b.bid);
        let prob = clicks.click_probability(label, product.popularity);
        let c = Binomial::new(impressions, prob).map_err(|e| Error::Precondition(e.to_string()))?.sample(&mut r);
        imp += impressions;
        clk += c;
        rev += c as f64 * bid;
    }
    Ok((imp, clk, rev))
}

/// A/B replay, routed by arm A's `split`. A query's click draws come from
/// one seeded stream whichever arm serves it, so mirrored identical systems
/// give identical totals.
pub fn replay_traffic(
    a: &ServingSystem,
    b: &ServingSystem,
    stream: &[QueryRecord],
    clicks: &ClickConfig,
    seed: u64,
) -> Result<ReplayReport> {
    let mut totals = [(0u64, 0u64, 0.0f64); 2];
    let mut hits = [0usize; 2];
    for (i, rec) in stream.iter().enumerate() {
        let s = derive_seed(seed, &format!("replay-{i}"));
        let (to_a, to_b) = a.config.split.route(i);
        for (k, sys) in [a, b].into_iter().enumerate().filter(|&(k, _)| if k == 0 { to_a } else { to_b }) {
            let trace = sys.handle_request(&rec.text)?;
            hits[k] += trace.cache_hit as usize;
            let (imp, clk, rev) = serve_clicks(sys, &trace, rec, clicks, s)?;
            totals[k].0 += imp;
            totals[k].1 += clk;
            totals[k].2 += rev;
        }
    }
    let [ma, mb] = totals.map(|(i, c, r)| BusinessMetrics::from_totals(i, c, r));
    Ok(ReplayReport {
        delta_cpm_pct: pct(mb.cpm, ma.cpm),
        delta_revenue_pct: pct(mb.revenue, ma.revenue),
        delta_cpc_pct: pct(mb.cpc, ma.cpc),
        delta_clicks_pct: pct(mb.clicks as f64, ma.clicks as f64),
        a: ma,
        b: mb,
        cache_hits: (hits[0], hits[1]),
    })
}

impl ReplayReport {
    pub const HEADER: &'static str = "arm,impressions,clicks,revenue,cpc,cpm";

    pub fn to_csv(&self) -> String {
        use crate::util::fmt_f64;
        let row = |name: &str, m: &BusinessMetrics| {
            format!("{name},{},{},{},{},{}\n", m.impressions, m.clicks, fmt_f64(m.revenue), fmt_f64(m.cpc), fmt_f64(m.cpm))
        };
        let mut s = format!("{}\n", Self::HEADER);
        s.push_str(&row("a", &self.a));
        s.push_str(&row("b", &self.b));
        s.push_str(&format!(
            "delta_pct,,{},{},{},{}\n",
            fmt_f64(self.delta_clicks_pct),
            fmt_f64(self.delta_revenue_pct),
            fmt_f64(self.delta_cpc_pct),
            fmt_f64(self.delta_cpm_pct)
        ));
        s
    }
}
