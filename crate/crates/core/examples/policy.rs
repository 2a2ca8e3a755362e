//! Post-pre-trains and fine-tunes the bidword generator, then decodes a few
//! queries with plain and trie-constrained beam search.

use mobgm::corpus::Corpus;
use mobgm::eval::authentic_trie;
use mobgm::pipeline::{run_ppt, run_sft, split_data, RunConfig};
use mobgm::policy::{beam_search, sample, trie_constrained_beam_search};

fn main() -> mobgm::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let config = RunConfig::smoke();
    let corpus = Corpus::generate(&config.corpus, config.seed)?;
    let splits = split_data(&corpus, &config)?;
    let (ppt, ppt_curve) = run_ppt(&corpus, &splits, &config)?;
    let (sft, sft_curve) = run_sft(&ppt, &splits, &config)?;
    println!("PPT loss {:?}\nSFT loss {:?}", ppt_curve, sft_curve);

    let w = &corpus.world;
    let trie = authentic_trie(w, &corpus.logs, config.corpus.datasets.authenticity_threshold)?;
    for q in splits.eval_queries.iter().take(3) {
        println!("\nquery `{}`", w.vocab.decode(q));
        println!("  beam:");
        for (b, s) in beam_search(&sft, q, &config.decode)?.iter().take(5) {
            println!("    {s:>8.4}  {}", w.vocab.decode(b));
        }
        println!("  trie-constrained:");
        for (b, s) in trie_constrained_beam_search(&sft, q, &trie, &config.decode)?.iter().take(5) {
            println!("    {s:>8.4}  {}", w.vocab.decode(b));
        }
        let drawn = sample(&sft, q, 1.0, 7, config.decode.max_new_tokens)?;
        println!("  sample: {}", w.vocab.decode(&drawn));
    }
    Ok(())
}
