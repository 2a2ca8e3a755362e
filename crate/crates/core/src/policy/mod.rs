//! The bidword generator: a conditional next-token model with exact
//! sequence log-likelihood, its two training stages and its decoders.

mod decode;
mod model;
mod training;
mod trie;

pub use decode::{beam_search, draw, length_normalized, sample, trie_constrained_beam_search, DecodeConfig};
pub use model::{PolicyConfig, PolicyModel, PromptContext};
pub use training::{ppt_loss_and_grad, sft_loss, train_ppt, train_sft};
pub use trie::{build_trie, Trie, TrieNode};

use crate::corpus::TokenId;
use crate::Result;

pub fn sequence_logprob(model: &PolicyModel, prompt: &[TokenId], target: &[TokenId]) -> Result<f64> {
    model.sequence_logprob(prompt, target)
}
