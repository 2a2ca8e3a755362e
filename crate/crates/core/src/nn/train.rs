use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{lr_at, AdamW, AdamWConfig, Parameters, ScheduleConfig};
use crate::util::{derive_seed, rng};
use crate::{Error, Result};

/// Minibatch training settings shared by every model in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 1, lr: 1e-5, batch_size: 32, warmup_fraction: 0.05, weight_decay: 0.01, seed: 0 }
    }
}

/// A loss is considered divergent once an epoch mean exceeds this multiple
/// of the first minibatch's loss.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Runs AdamW with warmup + cosine decay over shuffled minibatches.
///
/// `step_loss` must return the loss of one example and accumulate its
/// gradient; gradients are averaged over the minibatch. Returns the mean
/// training loss of each epoch.
pub fn fit<M, E, F>(model: &mut M, data: &[E], config: &TrainConfig, stage: &str, mut step_loss: F) -> Result<Vec<f64>>
where
    M: Parameters,
    F: FnMut(&mut M, &E) -> Result<f64>,
{
    if data.is_empty() {
        return Err(Error::EmptyDataset(format!("{stage}: no training examples")));
    }
    let batch = config.batch_size.max(1);
    let steps_per_epoch = data.len().div_ceil(batch) as u64;
    let total_steps = steps_per_epoch * config.epochs as u64;
    let schedule = ScheduleConfig {
        base_lr: config.lr,
        warmup_steps: (config.warmup_fraction * total_steps as f64).round() as u64,
        total_steps,
    };
    let mut opt = AdamW::new(AdamWConfig { lr: config.lr, weight_decay: config.weight_decay, ..Default::default() });
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut reference: Option<f64> = None;
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng(derive_seed(config.seed, &format!("{stage}-epoch-{epoch}"))));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            model.zero_grad();
            let mut batch_loss = 0.0;
            for &i in chunk {
                batch_loss += step_loss(model, &data[i])?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!("{stage} loss at epoch {epoch}")));
            }
            reference.get_or_insert(batch_loss / chunk.len() as f64);
            model.scale_grad(1.0 / chunk.len() as f64);
            // Warmup starts from step 1 so the very first update is non-zero.
            opt.set_lr(lr_at(opt.step + 1, &schedule));
            opt.step(&mut model.params_mut())?;
            epoch_loss += batch_loss;
        }
        let mean = epoch_loss / data.len() as f64;
        let limit = DIVERGENCE_FACTOR * reference.unwrap_or(mean).max(1e-12);
        if mean > limit {
            return Err(Error::Divergence { stage: stage.to_string(), loss: mean, limit });
        }
        log::debug!("{stage} epoch {epoch}: loss {mean:.6}");
        curve.push(mean);
    }
    Ok(curve)
}
