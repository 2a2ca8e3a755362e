//! Online deployment simulation.

mod cache;
mod index;
mod replay;
mod system;

use std::io::{BufRead, Write};

pub use cache::{generate_bidwords, precompute_cache, BidwordCache};
pub use index::{retrieve, retrieve_with_source, InvertedIndex};
pub use replay::{replay_traffic, ReplayReport};
pub use system::{filter_and_sort, rewrite, RequestTrace, ServingConfig, ServingSystem, TrafficSplit};

use crate::Result;

/// Line protocol: one query per input line; each response line is
/// `hit|miss <tab> bidword:reward;... <tab> product ids`.
pub fn listen<R: BufRead, W: Write>(sys: &ServingSystem, input: R, mut output: W) -> Result<()> {
    let vocab = &sys.world.vocab;
    for line in input.lines() {
        let line = line?;
        let q = line.trim();
        if q.is_empty() {
            continue;
        }
        let t = sys.handle_request(&vocab.encode(q))?;
        let bws: Vec<String> =
            t.bidwords.iter().map(|(b, r)| format!("{}:{r:.3}", vocab.decode(b))).collect();
        let ps: Vec<String> = t.products.iter().map(|(p, _)| p.to_string()).collect();
        writeln!(output, "{}\t{}\t{}", if t.cache_hit { "hit" } else { "miss" }, bws.join(";"), ps.join(","))?;
        output.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_world, ClickConfig, QueryRecord, Tier, World, WorldConfig};
    use crate::discriminators::{DiscriminatorConfig, RelevanceModel};
    use crate::policy::{DecodeConfig, PolicyConfig, PolicyModel};

    struct Fixture {
        world: World,
        model: PolicyModel,
        rel: RelevanceModel,
        index: InvertedIndex,
        decode: DecodeConfig,
        queries: Vec<QueryRecord>,
    }

    fn fixture() -> Fixture {
        let world = build_world(&WorldConfig::default(), 2).unwrap();
        let model = PolicyModel::new(world.vocab.len(), &PolicyConfig { embed_dim: 8, hidden_dim: 16, max_len: 6 }, 3);
        let dc = DiscriminatorConfig { embed_dim: 8, hidden_dim: 16, ..Default::default() };
        let rel = RelevanceModel::new(world.vocab.len(), &dc, 4);
        let index = InvertedIndex::build(&world);
        let queries = world
            .nodes
            .iter()
            .take(6)
            .map(|n| QueryRecord { text: n.surface_forms[0].clone(), frequency: 3, intent_category: n.id, tier: Tier::Head })
            .collect();
        let decode = DecodeConfig { beam_width: 3, max_new_tokens: 6, ..Default::default() };
        Fixture { world, model, rel, index, decode, queries }
    }

    fn system<'a>(f: &'a Fixture, cache: BidwordCache, config: ServingConfig) -> ServingSystem<'a> {
        ServingSystem { world: &f.world, model: &f.model, relevance: &f.rel, cache, index: &f.index, decode: f.decode.clone(), config }
    }

    fn small_config() -> ServingConfig {
        ServingConfig { bidwords_per_query: 5, sample_retries: 10, ..Default::default() }
    }

    #[test]
    fn cache_matches_realtime_path() {
        let f = fixture();
        let cfg = small_config();
        let heads: Vec<_> = f.queries.iter().take(3).map(|q| q.text.clone()).collect();
        let cache = precompute_cache(&f.model, &heads, &f.decode, 5, 10, cfg.seed).unwrap();
        let empty = BidwordCache { entries: Default::default(), ..cache.clone() };
        for q in &heads {
            let (hit, h) = rewrite(q, &cache, &f.model, &f.decode, &cfg).unwrap();
            let (miss, m) = rewrite(q, &empty, &f.model, &f.decode, &cfg).unwrap();
            assert!(h && !m);
            assert_eq!(hit, miss);
        }
        let text = cache.to_tsv(&f.world.vocab);
        assert_eq!(BidwordCache::from_tsv(&text, &f.world.vocab).unwrap(), cache);
    }

    #[test]
    fn filter_respects_threshold_and_order() {
        let f = fixture();
        let q = &f.queries[1].text;
        let bws: Vec<_> = f.world.bidwords.iter().take(40).map(|b| b.text.clone()).collect();
        let all = filter_and_sort(q, &bws, &f.rel, f64::NEG_INFINITY);
        assert_eq!(all.len(), bws.len());
        let min = all[all.len() / 2].1;
        let kept = filter_and_sort(q, &bws, &f.rel, min);
        assert!(kept.iter().all(|(_, r)| *r >= min && (-1.0..=1.0).contains(r)));
        assert!(kept.windows(2).all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)));
        assert_eq!(kept.len(), all.iter().filter(|(_, r)| *r >= min).count());
    }

    #[test]
    fn requests_are_deterministic_and_disabling_filter_only_adds() {
        let f = fixture();
        let on = system(&f, BidwordCache::default(), ServingConfig { min_reward: 0.2, ..small_config() });
        let off = system(&f, BidwordCache::default(), ServingConfig { filter_enabled: false, ..small_config() });
        for q in &f.queries {
            let a = on.handle_request(&q.text).unwrap();
            let b = on.handle_request(&q.text).unwrap();
            assert_eq!((a.bidwords.clone(), a.products.clone()), (b.bidwords, b.products));
            assert!(a.latency_us >= 1);
            assert_eq!(a.considered, a.filtered + a.surviving);
            let mut ps: Vec<_> = a.products.iter().map(|p| p.0).collect();
            ps.sort();
            ps.dedup();
            assert_eq!(ps.len(), a.products.len());
            let c = off.handle_request(&q.text).unwrap();
            assert_eq!(c.filtered, 0);
            assert!(c.surviving >= a.surviving);
            let wide: Vec<_> = c.products.iter().map(|p| p.0).collect();
            assert!(a.products.iter().all(|p| wide.contains(&p.0)));
        }
    }

    #[test]
    fn identical_arms_have_zero_deltas() {
        let f = fixture();
        let a = system(&f, BidwordCache::default(), small_config());
        let b = system(&f, BidwordCache::default(), small_config());
        let r = replay_traffic(&a, &b, &f.queries, &ClickConfig::default(), 9).unwrap();
        assert_eq!(r.a, r.b);
        assert_eq!(r.delta_cpm_pct, 0.0);
        assert_eq!(r.delta_revenue_pct, 0.0);
    }

    #[test]
    fn listen_answers_each_line() {
        let f = fixture();
        let sys = system(&f, BidwordCache::default(), small_config());
        let q = f.world.vocab.decode(&f.queries[0].text);
        let mut out = Vec::new();
        listen(&sys, format!("{q}\n\n{q}\n").as_bytes(), &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], lines[1]);
        assert!(lines[0].starts_with("miss\t"));
    }
}
