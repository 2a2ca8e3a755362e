//! Builds preference pairs from discriminator scores and aligns a fine-tuned
//! policy with the multi-objective loss, comparing it with plain DPO.

use mobgm::alignment::{build_preference_pairs, candidate_pool, modpo_loss, train_alignment, Objective};
use mobgm::corpus::Corpus;
use mobgm::pipeline::{run_ppt, run_sft, split_data, train_discriminators, RunConfig};
use mobgm::util::derive_seed;

fn main() -> mobgm::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let config = RunConfig::smoke();
    let corpus = Corpus::generate(&config.corpus, config.seed)?;
    let (discs, _) = train_discriminators(&corpus, &config)?;
    let splits = split_data(&corpus, &config)?;
    let (ppt, _) = run_ppt(&corpus, &splits, &config)?;
    let (sft, _) = run_sft(&ppt, &splits, &config)?;

    let a = &config.alignment;
    let mut triples = Vec::new();
    for (i, q) in splits.align_queries.iter().take(a.queries).enumerate() {
        let pool = candidate_pool(&sft, q, &config.decode, a.candidate_beam, a.candidate_samples, derive_seed(config.seed, &format!("pool-{i}")))?;
        triples.extend(build_preference_pairs(q, &pool, &discs, a.loss.min_relevance_gap));
    }
    println!("{} preference pairs", triples.len());
    let vocab = &corpus.world.vocab;
    for t in triples.iter().take(3) {
        println!(
            "  `{}`: `{}` over `{}` (Δau {:+.3}, Δval {:+.3})",
            vocab.decode(&t.query), vocab.decode(&t.winner), vocab.decode(&t.loser), t.delta_au, t.delta_val
        );
    }

    let mean_loss = |m| -> mobgm::Result<f64> {
        Ok(triples.iter().map(|t| modpo_loss(m, &sft, t, &a.loss)).sum::<mobgm::Result<f64>>()? / triples.len() as f64)
    };
    println!("loss at the reference: {:.4}", mean_loss(&sft)?);
    let (aligned, curve) = train_alignment(&sft, &triples, &a.loss, Objective::MultiObjective)?;
    println!("multi-objective: epoch losses {curve:?}, final {:.4}", mean_loss(&aligned)?);
    let (dpo, curve) = train_alignment(&sft, &triples, &a.loss, Objective::Dpo { beta: a.loss.beta_w })?;
    println!("DPO: epoch losses {curve:?}, multi-objective loss {:.4}", mean_loss(&dpo)?);
    Ok(())
}
