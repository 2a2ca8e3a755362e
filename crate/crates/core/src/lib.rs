//! Multi-objective bidword generation for sponsored search.
//!
//! The crate is organized as a pipeline:
//!
//! - [`corpus`] builds a synthetic e-commerce world with computable ground
//!   truth and simulates the click logs every dataset is mined from.
//! - [`nn`] is the numeric substrate: parameter tensors with exact
//!   gradients, a handful of forward/backward primitives, AdamW and a
//!   warmup-cosine schedule.
//! - [`discriminators`] trains the relevance, authenticity and value reward
//!   models.
//! - [`policy`] is the autoregressive bidword generator with beam search,
//!   trie-constrained decoding and sampling.
//! - [`alignment`] turns discriminator scores into preference pairs and
//!   trains the policy with the margin-based multi-objective loss.
//! - [`eval`] computes Recall@k, NDCG@k, oracle quality rates, business
//!   metrics and the ablation matrix.
//! - [`serving`] simulates the online deployment: cache, real-time
//!   fallback, relevance filter, inverted index and A/B traffic replay.
//! - [`pipeline`] ties the stages together under one configuration file.

pub mod alignment;
pub mod corpus;
pub mod discriminators;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod policy;
pub mod serving;
pub mod util;

pub use error::{Error, Result};
