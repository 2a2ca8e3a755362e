//! Reward models: four-way query–bidword relevance, binary bidword
//! authenticity and scalar CPM value, each a pooled sequence encoder with a
//! task head. Oracle twins computed from world ground truth live in
//! [`oracle`].

mod build;
mod encoder;
mod models;
pub mod oracle;

pub use build::{build_discriminators, DiscriminatorReport};
pub use encoder::{EncoderCache, SequenceEncoder};
pub use models::{
    authenticity_accuracy, relevance_accuracy, train_authenticity, train_relevance, train_value, value_fit,
    AuthenticityModel, DiscriminatorConfig, RelevanceModel, ValueFit, ValueModel,
};

pub use oracle::{oracle_authenticity, oracle_label, oracle_relevance, oracle_value};

use crate::corpus::TokenId;

/// The three trained reward models, immutable once built.
#[derive(Debug, Clone)]
pub struct Discriminators {
    pub relevance: RelevanceModel,
    pub authenticity: AuthenticityModel,
    pub value: ValueModel,
}

impl Discriminators {
    pub fn relevance_probs(&self, query: &[TokenId], bidword: &[TokenId]) -> [f64; 4] {
        self.relevance.probs(query, bidword)
    }

    pub fn authenticity(&self, bidword: &[TokenId]) -> f64 {
        self.authenticity.prob(bidword)
    }

    /// Normalized CPM estimate.
    pub fn value(&self, bidword: &[TokenId]) -> f64 {
        self.value.estimate(bidword)
    }
}

pub fn relevance_probs(model: &RelevanceModel, query: &[TokenId], bidword: &[TokenId]) -> [f64; 4] {
    model.probs(query, bidword)
}

pub fn authenticity_prob(model: &AuthenticityModel, bidword: &[TokenId]) -> f64 {
    model.prob(bidword)
}

pub fn value_estimate(model: &ValueModel, bidword: &[TokenId]) -> f64 {
    model.estimate(bidword)
}
