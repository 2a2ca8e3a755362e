//! Multi-objective preference alignment: discriminator rewards, winner/loser
//! pair construction and the margin-based preference loss trained against a
//! frozen reference policy.

mod loss;
mod pairs;
mod rewards;

pub use loss::{
    dpo_loss, modpo_argument, modpo_loss, preference_loss_and_grad, score_with_reference, train_alignment,
    AlignmentConfig, Objective, ScoredTriple,
};
pub use pairs::{
    build_preference_pairs, candidate_pool, pair_outside_in, randomize_orientation, read_preferences, refresh_margins,
    write_preferences, PreferenceTriple,
};
pub use rewards::{margin_rewards, relevance_reward, relevance_reward_from_probs, HYPER_CLASS};
