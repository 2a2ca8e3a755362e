//! Serves queries through cache, filter, retrieval and intent filter on the
//! outputs of an earlier run, then replays traffic with the fine-tuned model
//! as arm A and the aligned model as arm B.
//!
//!     cargo run --example pipeline -- /tmp/mobgm-smoke
//!     cargo run --example serving -- /tmp/mobgm-smoke

use std::path::PathBuf;

use mobgm::corpus::Corpus;
use mobgm::discriminators::RelevanceModel;
use mobgm::nn::Checkpoint;
use mobgm::pipeline::{head_queries, RunConfig};
use mobgm::policy::PolicyModel;
use mobgm::serving::{precompute_cache, replay_traffic, InvertedIndex, ServingSystem};

fn main() -> mobgm::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).map_or_else(|| "/tmp/mobgm-smoke".into(), Into::into);
    let config = RunConfig::load(&dir.join("config.toml"))?;
    let corpus = Corpus::generate(&config.corpus, config.seed)?;
    let load = |p: &str| Checkpoint::load(&dir.join(p));
    let aligned = PolicyModel::from_checkpoint(&load("align/full.ckpt")?)?;
    let sft = PolicyModel::from_checkpoint(&load("policy/sft.ckpt")?)?;
    let relevance = RelevanceModel::from_checkpoint(&load("disc/relevance.ckpt")?)?;

    let sc = &config.serving;
    let heads = head_queries(&corpus, sc.cache_queries);
    let index = InvertedIndex::build(&corpus.world);
    let system = |model| -> mobgm::Result<ServingSystem> {
        Ok(ServingSystem {
            world: &corpus.world,
            model,
            relevance: &relevance,
            cache: precompute_cache(model, &heads, &config.decode, sc.bidwords_per_query, sc.sample_retries, sc.seed)?,
            index: &index,
            decode: config.decode,
            config: sc.clone(),
        })
    };
    let (a, b) = (system(&sft)?, system(&aligned)?);

    let vocab = &corpus.world.vocab;
    for q in corpus.logs.queries.iter().take(4) {
        let t = b.handle_request(&q.text)?;
        println!(
            "`{}` ({}): {} rewrites, {} filtered, {} products, {}µs",
            vocab.decode(&q.text),
            if t.cache_hit { "cache" } else { "generated" },
            t.considered,
            t.filtered,
            t.products.len(),
            t.latency_us
        );
        for (bw, r) in t.bidwords.iter().take(3) {
            println!("    {r:+.3}  {}", vocab.decode(bw));
        }
    }

    let stream: Vec<_> = corpus.logs.queries.iter().take(sc.replay_queries).cloned().collect();
    let report = replay_traffic(&a, &b, &stream, &config.corpus.clicks, sc.seed)?;
    print!("\n{}", report.to_csv());
    Ok(())
}
