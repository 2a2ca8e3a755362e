//! Trains the relevance, authenticity and value models and compares their
//! scores with the world's ground truth on a few bidwords.

use mobgm::corpus::Corpus;
use mobgm::corpus::RelevanceLabel;
use mobgm::discriminators::{oracle_label, oracle_value};
use mobgm::pipeline::{train_discriminators, RunConfig};

fn main() -> mobgm::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let config = RunConfig::smoke();
    let corpus = Corpus::generate(&config.corpus, config.seed)?;
    let (discs, report) = train_discriminators(&corpus, &config)?;
    println!(
        "held-out: relevance acc {:.3} (majority {:.3}), authenticity acc {:.3} (majority {:.3}), value R² {:.3}",
        report.relevance_accuracy, report.relevance_majority, report.authenticity_accuracy, report.authenticity_majority, report.value.r2
    );

    let w = &corpus.world;
    let q = &corpus.logs.queries[0].text;
    println!("\nquery `{}`", w.vocab.decode(q));
    println!("{:<28} {:>20} {:>20} {:>7} {:>8} {:>9}", "bidword", "predicted", "truth", "auth", "cpm", "true cpm");
    for b in w.bidwords.iter().step_by(w.bidwords.len() / 8).map(|b| &b.text) {
        let predicted = RelevanceLabel::ALL.into_iter().max_by(|x, y| {
            let p = discs.relevance_probs(q, b);
            p[x.index()].total_cmp(&p[y.index()])
        });
        println!(
            "{:<28} {:>20} {:>20} {:>7.3} {:>8.2} {:>9.2}",
            w.vocab.decode(b),
            predicted.map_or("-", |l| l.name()),
            oracle_label(w, q, b).name(),
            discs.authenticity(b),
            discs.value.estimate_cpm(b),
            oracle_value(w, b),
        );
    }
    Ok(())
}
