use std::collections::BTreeSet;

use log::info;
use rand::seq::SliceRandom;

use super::config::{PolicyStage, RunConfig};
use crate::corpus::{build_golden_set, derive_ppt_pairs, derive_sft_pairs, Corpus, GoldenSet, Text};
use crate::discriminators::{build_discriminators, DiscriminatorReport, Discriminators};
use crate::eval::{AblationConfig, AblationInputs};
use crate::nn::TrainConfig;
use crate::policy::{train_ppt, train_sft, PolicyModel};
use crate::util::{derive_seed, rng};
use crate::{Error, Result};

/// Query-disjoint datasets for the policy stages.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub golden: GoldenSet,
    /// Golden queries never seen by PPT, SFT or alignment.
    pub eval_queries: Vec<Text>,
    pub align_queries: Vec<Text>,
    pub ppt_pairs: Vec<(Text, Text)>,
    pub sft_pairs: Vec<(Text, Text)>,
}

fn cap(mut pairs: Vec<(Text, Text)>, max: usize, seed: u64) -> Vec<(Text, Text)> {
    if max > 0 && pairs.len() > max {
        pairs.shuffle(&mut rng(seed));
        pairs.truncate(max);
    }
    pairs
}

pub fn split_data(corpus: &Corpus, config: &RunConfig) -> Result<DataSplits> {
    let (world, logs, ds) = (&corpus.world, &corpus.logs, &config.corpus.datasets);
    let seed = config.seed;
    let golden = build_golden_set(world, logs, ds.golden_k);
    let mut eval_queries: Vec<Text> = golden.keys().cloned().collect();
    if eval_queries.len() < config.eval.queries {
        return Err(Error::Precondition(format!(
            "{} golden queries, {} requested for evaluation",
            eval_queries.len(),
            config.eval.queries
        )));
    }
    eval_queries.shuffle(&mut rng(derive_seed(seed, "eval-split")));
    eval_queries.truncate(config.eval.queries);
    eval_queries.sort();
    let held: BTreeSet<&Text> = eval_queries.iter().collect();

    let mut align_queries: Vec<Text> =
        logs.queries.iter().map(|q| q.text.clone()).filter(|q| !held.contains(q)).collect::<BTreeSet<_>>().into_iter().collect();
    align_queries.shuffle(&mut rng(derive_seed(seed, "align-split")));
    align_queries.truncate(config.alignment.queries);

    let keep = |pairs: Vec<(Text, Text)>| -> Vec<(Text, Text)> { pairs.into_iter().filter(|(q, _)| !held.contains(q)).collect() };
    let sft = derive_sft_pairs(world, logs, &ds.sft, ds.authenticity_threshold, &ds.tier_multipliers, derive_seed(seed, "sft-data"))?;
    let ppt = derive_ppt_pairs(world, logs, ds.ppt_min_clicks, &ds.tier_multipliers, derive_seed(seed, "ppt-data"))?;
    let sft_pairs = cap(keep(sft), config.sft.max_pairs, derive_seed(seed, "sft-cap"));
    let ppt_pairs = cap(keep(ppt), config.ppt.max_pairs, derive_seed(seed, "ppt-cap"));
    info!(
        "splits: {} eval queries, {} alignment queries, {} PPT pairs, {} SFT pairs",
        eval_queries.len(),
        align_queries.len(),
        ppt_pairs.len(),
        sft_pairs.len()
    );
    Ok(DataSplits { golden, eval_queries, align_queries, ppt_pairs, sft_pairs })
}

fn seeded(stage: &PolicyStage, seed: u64, label: &str) -> TrainConfig {
    TrainConfig { seed: derive_seed(seed, label), ..stage.train }
}

pub fn train_discriminators(corpus: &Corpus, config: &RunConfig) -> Result<(Discriminators, DiscriminatorReport)> {
    build_discriminators(
        &corpus.world,
        &corpus.logs,
        &config.corpus.datasets,
        &config.discriminators,
        derive_seed(config.seed, "discriminators"),
    )
}

/// Post-pre-training from a fresh model.
pub fn run_ppt(corpus: &Corpus, splits: &DataSplits, config: &RunConfig) -> Result<(PolicyModel, Vec<f64>)> {
    let mut m = PolicyModel::new(corpus.world.vocab.len(), &config.policy, derive_seed(config.seed, "policy-init"));
    let curve = train_ppt(&mut m, &splits.ppt_pairs, &seeded(&config.ppt, config.seed, "ppt"))?;
    Ok((m, curve))
}

/// Supervised fine-tuning starting from `init`.
pub fn run_sft(init: &PolicyModel, splits: &DataSplits, config: &RunConfig) -> Result<(PolicyModel, Vec<f64>)> {
    let mut m = init.clone();
    let curve = train_sft(&mut m, &splits.sft_pairs, &seeded(&config.sft, config.seed, "sft"))?;
    Ok((m, curve))
}

pub fn ablation_config(config: &RunConfig) -> AblationConfig {
    let mut alignment = config.alignment.loss;
    alignment.train.seed = derive_seed(config.seed, "alignment");
    AblationConfig {
        alignment,
        decode: config.decode,
        candidate_beam: config.alignment.candidate_beam,
        candidate_samples: config.alignment.candidate_samples,
        seed: config.seed,
    }
}

pub fn ablation_inputs<'a>(
    corpus: &'a Corpus,
    discs: &'a Discriminators,
    ppt: &'a PolicyModel,
    sft: &'a PolicyModel,
    splits: &'a DataSplits,
    config: &RunConfig,
) -> AblationInputs<'a> {
    AblationInputs {
        world: &corpus.world,
        logs: &corpus.logs,
        discriminators: discs,
        ppt_model: ppt,
        sft_model: sft,
        align_queries: &splits.align_queries,
        eval_queries: &splits.eval_queries,
        golden: &splits.golden,
        auth_threshold: config.corpus.datasets.authenticity_threshold,
    }
}
