//! Generates the synthetic world and click logs, prints a few facts about
//! them and writes the corpus files to a directory.
//!
//!     cargo run --example corpus -- [out_dir]

use mobgm::corpus::{build_golden_set, Corpus, Tier};
use mobgm::eval::business_metrics;
use mobgm::pipeline::RunConfig;

fn main() -> mobgm::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("mobgm-corpus"), Into::into);
    let config = RunConfig::smoke();
    let corpus = Corpus::generate(&config.corpus, config.seed)?;
    let (w, logs) = (&corpus.world, &corpus.logs);

    println!("world: {} nodes ({} leaves), {} products, {} bidwords, {} words",
        w.nodes.len(), w.leaves().count(), w.products.len(), w.bidwords.len(), w.vocab.len());
    for tier in [Tier::Head, Tier::Middle, Tier::Tail] {
        let qs: Vec<_> = logs.queries.iter().filter(|q| q.tier == tier).collect();
        println!("{tier:?}: {} queries, {} searches", qs.len(), qs.iter().map(|q| q.frequency).sum::<u64>());
    }
    let m = business_metrics(logs);
    println!("logs: {} records, CTR {:.4}, CPC {:.3}, CPM {:.3}", logs.records.len(), m.clicks as f64 / m.impressions as f64, m.cpc, m.cpm);

    let golden = build_golden_set(w, logs, config.corpus.datasets.golden_k);
    if let Some((q, bs)) = golden.iter().next() {
        println!("golden list for `{}`:", w.vocab.decode(q));
        for b in bs.iter().take(5) {
            println!("  {:<30} {}", w.vocab.decode(b), w.relevance(q, b).name());
        }
    }

    for p in corpus.write_files(&config.corpus, config.seed, config.seed, &out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
