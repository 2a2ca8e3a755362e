use rand::seq::SliceRandom;

use super::models::*;
use super::Discriminators;
use crate::corpus::{
    balance_binary, derive_authenticity_dataset, derive_cpm_dataset, derive_relevance_dataset, oversample_binary,
    ClickLog, DatasetConfig, RelevanceLabel, Text, World,
};
use crate::util::{derive_seed, rng};
use crate::{Error, Result};

/// Held-out quality of the three trained discriminators next to their
/// trivial baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorReport {
    pub relevance_accuracy: f64,
    pub relevance_majority: f64,
    pub authenticity_accuracy: f64,
    pub authenticity_majority: f64,
    pub value: ValueFit,
    pub relevance_curve: Vec<f64>,
    pub authenticity_curve: Vec<f64>,
    pub value_curve: Vec<f64>,
}

fn split<T: Clone>(mut rows: Vec<T>, fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    rows.shuffle(&mut rng(seed));
    let n_test = ((rows.len() as f64) * fraction).round() as usize;
    if n_test == 0 || n_test >= rows.len() {
        return Err(Error::Precondition(format!(
            "cannot hold out {fraction} of {} rows and keep both sides non-empty",
            rows.len()
        )));
    }
    let test = rows.split_off(rows.len() - n_test);
    Ok((rows, test))
}

fn majority<T>(rows: &[T], key: impl Fn(&T) -> usize, classes: usize) -> f64 {
    let mut counts = vec![0usize; classes];
    for r in rows {
        counts[key(r)] += 1;
    }
    *counts.iter().max().unwrap_or(&0) as f64 / rows.len().max(1) as f64
}

/// Derives the three training sets from the world, holds out a slice of
/// each, trains all three models and scores them on the held-out slices.
pub fn build_discriminators(
    world: &World,
    logs: &ClickLog,
    datasets: &DatasetConfig,
    config: &DiscriminatorConfig,
    seed: u64,
) -> Result<(Discriminators, DiscriminatorReport)> {
    let v = world.vocab.len();
    let frac = config.holdout_fraction;

    let rel = derive_relevance_dataset(world, datasets.relevance_pairs, derive_seed(seed, "rel-data"))?;
    let (rel_train, rel_test) = split(rel, frac, derive_seed(seed, "rel-split"))?;
    let mut relevance = RelevanceModel::new(v, config, derive_seed(seed, "rel-init"));
    let relevance_curve = train_relevance(
        &mut relevance,
        &rel_train,
        &crate::nn::TrainConfig { seed: derive_seed(seed, "rel-train"), ..config.relevance },
    )?;

    let au = derive_authenticity_dataset(world, logs, datasets.authenticity_threshold)?;
    let (au_train, au_test) = split(au, frac, derive_seed(seed, "au-split"))?;
    let au_train = oversample_binary(&au_train, derive_seed(seed, "au-over"));
    let au_test = balance_binary(&au_test, derive_seed(seed, "au-balance"));
    if au_test.is_empty() {
        return Err(Error::EmptyDataset("authenticity hold-out lacks one of the two labels".into()));
    }
    let mut authenticity = AuthenticityModel::new(v, config, derive_seed(seed, "au-init"));
    let authenticity_curve = train_authenticity(
        &mut authenticity,
        &au_train,
        &crate::nn::TrainConfig { seed: derive_seed(seed, "au-train"), ..config.authenticity },
    )?;

    let cpm = derive_cpm_dataset(logs)?;
    let (val_train, val_test) = split(cpm, frac, derive_seed(seed, "val-split"))?;
    let mut value = ValueModel::new(v, config, derive_seed(seed, "val-init"));
    let value_curve = train_value(
        &mut value,
        &val_train,
        &crate::nn::TrainConfig { seed: derive_seed(seed, "val-train"), ..config.value },
    )?;

    let report = DiscriminatorReport {
        relevance_accuracy: relevance_accuracy(&relevance, &rel_test),
        relevance_majority: majority(&rel_test, |r: &(Text, Text, RelevanceLabel)| r.2.index(), 4),
        authenticity_accuracy: authenticity_accuracy(&authenticity, &au_test),
        authenticity_majority: majority(&au_test, |r: &(Text, u8)| r.1 as usize, 2),
        value: value_fit(&value, &val_test),
        relevance_curve,
        authenticity_curve,
        value_curve,
    };
    Ok((Discriminators { relevance, authenticity, value }, report))
}
