use super::model::PolicyModel;
use crate::corpus::Text;
use crate::nn::{fit, TrainConfig};
use crate::Result;

/// Sum of both directional negative log-likelihoods of one (query, title) pair.
pub fn ppt_loss_and_grad(model: &mut PolicyModel, query: &[u32], title: &[u32]) -> Result<f64> {
    let forward = model.logprob_and_grad(query, title, -1.0)?;
    let backward = model.logprob_and_grad(title, query, -1.0)?;
    Ok(-(forward + backward))
}

/// Post pre-training on (query, product title) pairs: query → title and
/// title → query.
pub fn train_ppt(model: &mut PolicyModel, pairs: &[(Text, Text)], config: &TrainConfig) -> Result<Vec<f64>> {
    fit(model, pairs, config, "ppt", |m, (q, t)| ppt_loss_and_grad(m, q, t))
}

/// Supervised fine-tuning on (query, bidword) pairs.
pub fn train_sft(model: &mut PolicyModel, pairs: &[(Text, Text)], config: &TrainConfig) -> Result<Vec<f64>> {
    fit(model, pairs, config, "sft", |m, (q, b)| Ok(-m.logprob_and_grad(q, b, -1.0)?))
}

/// Mean negative log-likelihood of `pairs` (no gradients).
pub fn sft_loss(model: &PolicyModel, pairs: &[(Text, Text)]) -> Result<f64> {
    let mut total = 0.0;
    for (q, b) in pairs {
        total -= model.sequence_logprob(q, b)?;
    }
    Ok(total / pairs.len().max(1) as f64)
}
