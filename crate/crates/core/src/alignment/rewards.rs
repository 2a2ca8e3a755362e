use crate::corpus::{RelevanceLabel, TokenId};
use crate::discriminators::{Discriminators, RelevanceModel};

/// Classifier class read as "Pr_hyper" in the relevance reward.
pub const HYPER_CLASS: RelevanceLabel = RelevanceLabel::HypernymToHyponym;

/// `Pr_syn + Pr_hyper − Pr_error` over a relevance distribution.
pub fn relevance_reward_from_probs(p: &[f64; 4]) -> f64 {
    p[RelevanceLabel::Synonym.index()] + p[HYPER_CLASS.index()] - p[RelevanceLabel::Incorrect.index()]
}

pub fn relevance_reward(model: &RelevanceModel, query: &[TokenId], bidword: &[TokenId]) -> f64 {
    relevance_reward_from_probs(&model.probs(query, bidword))
}

/// Winner-minus-loser authenticity and normalized value rewards.
pub fn margin_rewards(discs: &Discriminators, winner: &[TokenId], loser: &[TokenId]) -> (f64, f64) {
    (
        discs.authenticity(winner) - discs.authenticity(loser),
        discs.value(winner) - discs.value(loser),
    )
}
