use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::model::PolicyModel;
use super::trie::Trie;
use crate::corpus::{Text, TokenId};
use crate::util::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam_width: usize,
    pub length_penalty: f64,
    pub max_new_tokens: usize,
    pub constrained: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { beam_width: 10, length_penalty: 2.0, max_new_tokens: 16, constrained: false }
    }
}

/// `logprob / len^α`, where `len` counts generated tokens including EOS.
pub fn length_normalized(logprob: f64, len: usize, alpha: f64) -> f64 {
    logprob / (len.max(1) as f64).powf(alpha)
}

struct Live {
    tokens: Text,
    logprob: f64,
    node: usize,
}

/// Candidates ranked by length-normalized score, best first.
pub fn beam_search(model: &PolicyModel, query: &[TokenId], config: &DecodeConfig) -> Result<Vec<(Text, f64)>> {
    search(model, query, config, None)
}

/// Beam search with every step masked to the trie's children (EOS only at
/// terminal nodes). An empty result means no inventory path was reachable.
pub fn trie_constrained_beam_search(
    model: &PolicyModel,
    query: &[TokenId],
    trie: &Trie,
    config: &DecodeConfig,
) -> Result<Vec<(Text, f64)>> {
    search(model, query, config, Some(trie))
}

/// Renormalizes `logp` over `allowed` output indices.
fn masked(logp: &[f64], allowed: &[usize]) -> Vec<(usize, f64)> {
    let max = allowed.iter().map(|&j| logp[j]).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + allowed.iter().map(|&j| (logp[j] - max).exp()).sum::<f64>().ln();
    allowed.iter().map(|&j| (j, logp[j] - lse)).collect()
}

fn search(model: &PolicyModel, query: &[TokenId], config: &DecodeConfig, trie: Option<&Trie>) -> Result<Vec<(Text, f64)>> {
    if config.beam_width == 0 {
        return Err(Error::Precondition("beam_width must be ≥ 1".into()));
    }
    let max_new = config.max_new_tokens.min(model.max_len());
    let ctx = model.context(query);
    let eos = model.eos_index();
    let mut live = vec![Live { tokens: Vec::new(), logprob: 0.0, node: 0 }];
    let mut finished: Vec<(Text, f64)> = Vec::new();
    for step in 0..=max_new {
        if live.is_empty() {
            break;
        }
        // (live index, output index, cumulative logprob)
        let mut expansions: Vec<(usize, usize, f64)> = Vec::new();
        for (li, beam) in live.iter().enumerate() {
            let logp = model.next_logprobs(&ctx, &beam.tokens);
            let options: Vec<(usize, f64)> = match trie {
                None if step == max_new => Vec::new(),
                None => logp.iter().copied().enumerate().collect(),
                Some(t) => {
                    let node = &t.nodes[beam.node];
                    let mut allowed: Vec<usize> = if step < max_new {
                        node.children.keys().filter_map(|&tok| model.out_index(tok)).collect()
                    } else {
                        Vec::new()
                    };
                    if node.terminal && step < max_new {
                        allowed.push(eos);
                    }
                    if allowed.is_empty() {
                        // Forced stop at max length counts only on a terminal node.
                        if step == max_new && node.terminal {
                            finished.push((beam.tokens.clone(), beam.logprob));
                        }
                        continue;
                    }
                    masked(&logp, &allowed)
                }
            };
            if trie.is_none() && step == max_new {
                finished.push((beam.tokens.clone(), beam.logprob));
                continue;
            }
            expansions.extend(options.into_iter().map(|(j, lp)| (li, j, beam.logprob + lp)));
        }
        expansions.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
        expansions.truncate(config.beam_width);
        let mut next = Vec::with_capacity(expansions.len());
        for (li, j, lp) in expansions {
            let beam = &live[li];
            if j == eos {
                finished.push((beam.tokens.clone(), lp));
            } else {
                let tok = model.out_token(j);
                let node = trie.map_or(0, |t| t.child(beam.node, tok).expect("masked to children"));
                let mut tokens = beam.tokens.clone();
                tokens.push(tok);
                next.push(Live { tokens, logprob: lp, node });
            }
        }
        live = next;
    }
    let mut scored: Vec<(Text, f64)> = finished
        .into_iter()
        .map(|(t, lp)| {
            let len = if t.len() < max_new { t.len() + 1 } else { t.len() };
            let s = length_normalized(lp, len, config.length_penalty);
            (t, s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.dedup_by(|a, b| a.0 == b.0);
    scored.truncate(config.beam_width);
    Ok(scored)
}

/// Ancestral sampling at `temperature`; stops at EOS or `max_new_tokens`.
pub fn sample(model: &PolicyModel, query: &[TokenId], temperature: f64, seed: u64, max_new_tokens: usize) -> Result<Text> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Precondition(format!("temperature must be > 0, got {temperature}")));
    }
    let max_new = max_new_tokens.min(model.max_len());
    let ctx = model.context(query);
    let mut r = rng(seed);
    let mut out = Vec::new();
    while out.len() < max_new {
        let logp = model.next_logprobs(&ctx, &out);
        let j = draw(&logp, temperature, r.random::<f64>());
        if j == model.eos_index() {
            break;
        }
        out.push(model.out_token(j));
    }
    Ok(out)
}

/// Inverse-CDF draw from `softmax(logp / T)` with uniform `u`.
pub fn draw(logp: &[f64], temperature: f64, u: f64) -> usize {
    let scaled: Vec<f64> = logp.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    for (j, wj) in w.iter().enumerate() {
        acc += wj / total;
        if u < acc {
            return j;
        }
    }
    w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}
