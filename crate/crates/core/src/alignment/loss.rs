use serde::{Deserialize, Serialize};

use super::pairs::PreferenceTriple;
use crate::corpus::TokenId;
use crate::nn::{fit, ops, TrainConfig};
use crate::policy::PolicyModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    pub beta_w: f64,
    pub beta_l: f64,
    pub w_rel: f64,
    pub w_au: f64,
    pub w_val: f64,
    pub min_relevance_gap: f64,
    pub train: TrainConfig,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            beta_w: 1.0,
            beta_l: 0.25,
            w_rel: 0.5,
            w_au: 0.2,
            w_val: 0.3,
            min_relevance_gap: 0.1,
            train: TrainConfig { epochs: 2, lr: 1e-6, ..TrainConfig::default() },
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_rel, self.w_au, self.w_val];
        if !(self.w_rel > 0.0) || w.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Config("w_rel must be > 0 and w_au, w_val ≥ 0".into()));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("objective weights sum to {}, not 1", w.iter().sum::<f64>())));
        }
        if !(self.min_relevance_gap >= 0.0) || !self.beta_w.is_finite() || !self.beta_l.is_finite() {
            return Err(Error::Config("min_relevance_gap must be ≥ 0 and betas finite".into()));
        }
        Ok(())
    }

    /// Drops the authenticity margin. `w_rel` stays put so the KL scales
    /// `β/w_rel` match the full objective; the freed weight moves to value.
    pub fn without_authenticity(&self) -> Self {
        Self { w_au: 0.0, w_val: self.w_val + self.w_au, ..*self }
    }

    /// Drops the value margin, moving its weight to authenticity.
    pub fn without_value(&self) -> Self {
        Self { w_val: 0.0, w_au: self.w_au + self.w_val, ..*self }
    }
}

/// Which preference objective to optimize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    MultiObjective,
    Dpo { beta: f64 },
}

/// Argument of `−log σ(·)` in the multi-objective loss.
pub fn modpo_argument(
    config: &AlignmentConfig,
    logratio_w: f64,
    logratio_l: f64,
    delta_au: f64,
    delta_val: f64,
) -> f64 {
    (config.beta_w / config.w_rel) * logratio_w
        - (config.beta_l / config.w_rel) * logratio_l
        - (config.w_au / config.w_rel) * delta_au
        - (config.w_val / config.w_rel) * delta_val
}

fn logratios(policy: &PolicyModel, reference: &PolicyModel, q: &[TokenId], bw: &[TokenId], bl: &[TokenId]) -> Result<(f64, f64)> {
    Ok((
        policy.sequence_logprob(q, bw)? - reference.sequence_logprob(q, bw)?,
        policy.sequence_logprob(q, bl)? - reference.sequence_logprob(q, bl)?,
    ))
}

pub fn modpo_loss(policy: &PolicyModel, reference: &PolicyModel, t: &PreferenceTriple, config: &AlignmentConfig) -> Result<f64> {
    let (rw, rl) = logratios(policy, reference, &t.query, &t.winner, &t.loser)?;
    ops::finite(-ops::log_sigmoid(modpo_argument(config, rw, rl, t.delta_au, t.delta_val)), "alignment loss")
}

pub fn dpo_loss(policy: &PolicyModel, reference: &PolicyModel, q: &[TokenId], bw: &[TokenId], bl: &[TokenId], beta: f64) -> Result<f64> {
    let (rw, rl) = logratios(policy, reference, q, bw, bl)?;
    ops::finite(-ops::log_sigmoid(beta * (rw - rl)), "dpo loss")
}

/// A triple with its frozen reference log-probabilities.
#[derive(Debug, Clone)]
pub struct ScoredTriple {
    pub triple: PreferenceTriple,
    pub ref_winner: f64,
    pub ref_loser: f64,
}

pub fn score_with_reference(reference: &PolicyModel, triples: &[PreferenceTriple]) -> Result<Vec<ScoredTriple>> {
    triples
        .iter()
        .map(|t| {
            Ok(ScoredTriple {
                ref_winner: reference.sequence_logprob(&t.query, &t.winner)?,
                ref_loser: reference.sequence_logprob(&t.query, &t.loser)?,
                triple: t.clone(),
            })
        })
        .collect()
}

/// Loss of one scored triple; accumulates gradients into `policy` only.
pub fn preference_loss_and_grad(
    policy: &mut PolicyModel,
    s: &ScoredTriple,
    config: &AlignmentConfig,
    objective: Objective,
) -> Result<f64> {
    let t = &s.triple;
    let rw = policy.sequence_logprob(&t.query, &t.winner)? - s.ref_winner;
    let rl = policy.sequence_logprob(&t.query, &t.loser)? - s.ref_loser;
    let (x, a, c) = match objective {
        Objective::MultiObjective => (
            modpo_argument(config, rw, rl, t.delta_au, t.delta_val),
            config.beta_w / config.w_rel,
            config.beta_l / config.w_rel,
        ),
        Objective::Dpo { beta } => (beta * (rw - rl), beta, beta),
    };
    // d/dx [−log σ(x)] = −σ(−x)
    let g = -ops::sigmoid(-x);
    policy.logprob_and_grad(&t.query, &t.winner, g * a)?;
    policy.logprob_and_grad(&t.query, &t.loser, -g * c)?;
    ops::finite(-ops::log_sigmoid(x), "alignment loss")
}

/// Trains a copy of `reference` on preference triples; the reference itself
/// is only read. Returns the aligned model and its per-epoch mean loss.
pub fn train_alignment(
    reference: &PolicyModel,
    triples: &[PreferenceTriple],
    config: &AlignmentConfig,
    objective: Objective,
) -> Result<(PolicyModel, Vec<f64>)> {
    config.validate()?;
    let scored = score_with_reference(reference, triples)?;
    let mut policy = reference.clone();
    let curve = fit(&mut policy, &scored, &config.train, "alignment", |m, s| {
        preference_loss_and_grad(m, s, config, objective)
    })?;
    Ok((policy, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FIRST_WORD;
    use crate::nn::{grad_check, Parameters};
    use crate::policy::PolicyConfig;
    use crate::util::rng;
    use rand::Rng as _;

    fn policy(seed: u64) -> PolicyModel {
        let mut m = PolicyModel::new(FIRST_WORD as usize + 6, &PolicyConfig { embed_dim: 4, hidden_dim: 5, max_len: 4 }, seed);
        let mut r = rng(seed + 50);
        for p in m.params_mut() {
            for v in &mut p.values {
                *v += r.random_range(-0.5..0.5);
            }
        }
        m
    }

    fn triple(d_au: f64, d_val: f64) -> PreferenceTriple {
        PreferenceTriple { query: vec![4, 5], winner: vec![6, 7], loser: vec![8], delta_au: d_au, delta_val: d_val }
    }

    #[test]
    fn neutral_point_is_ln2() {
        let m = policy(1);
        let l = modpo_loss(&m, &m, &triple(0.0, 0.0), &AlignmentConfig::default()).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        assert!((dpo_loss(&m, &m, &[4], &[6], &[7], 0.5).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn reduces_to_dpo_with_single_objective() {
        let (p, r) = (policy(2), policy(3));
        let beta = 0.7;
        let cfg = AlignmentConfig { beta_w: beta, beta_l: beta, w_rel: 1.0, w_au: 0.0, w_val: 0.0, ..Default::default() };
        let t = triple(0.4, -0.3);
        let a = modpo_loss(&p, &r, &t, &cfg).unwrap();
        // Standard DPO written out independently.
        let lw = p.sequence_logprob(&t.query, &t.winner).unwrap() - r.sequence_logprob(&t.query, &t.winner).unwrap();
        let ll = p.sequence_logprob(&t.query, &t.loser).unwrap() - r.sequence_logprob(&t.query, &t.loser).unwrap();
        let z = beta * (lw - ll);
        let dpo = (1.0 + (-z).exp()).ln();
        assert!((a - dpo).abs() < 1e-12);
        assert!((dpo_loss(&p, &r, &t.query, &t.winner, &t.loser, beta).unwrap() - dpo).abs() < 1e-12);
    }

    #[test]
    fn positive_margins_increase_the_loss() {
        let m = policy(4);
        let cfg = AlignmentConfig::default();
        let mut prev = modpo_loss(&m, &m, &triple(0.0, 0.0), &cfg).unwrap();
        for k in 1..=5 {
            let l = modpo_loss(&m, &m, &triple(0.1 * k as f64, 0.0), &cfg).unwrap();
            assert!(l > prev);
            prev = l;
        }
        let base = modpo_loss(&m, &m, &triple(0.2, 0.0), &cfg).unwrap();
        assert!(modpo_loss(&m, &m, &triple(0.2, 0.3), &cfg).unwrap() > base);
    }

    #[test]
    fn ratios_to_w_rel_are_all_that_matter() {
        let (p, r) = (policy(5), policy(6));
        let cfg = AlignmentConfig::default();
        let k = 3.7;
        let scaled = AlignmentConfig {
            beta_w: cfg.beta_w * k,
            beta_l: cfg.beta_l * k,
            w_rel: cfg.w_rel * k,
            w_au: cfg.w_au * k,
            w_val: cfg.w_val * k,
            ..cfg
        };
        let t = triple(0.3, -0.2);
        assert!((modpo_loss(&p, &r, &t, &cfg).unwrap() - modpo_loss(&p, &r, &t, &scaled).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn swapping_the_pair_negates_the_argument() {
        let (p, r) = (policy(7), policy(8));
        let cfg = AlignmentConfig { beta_w: 0.6, beta_l: 0.6, ..Default::default() };
        let t = triple(0.3, 0.1);
        let s = PreferenceTriple { winner: t.loser.clone(), loser: t.winner.clone(), delta_au: -0.3, delta_val: -0.1, ..t.clone() };
        let sum = modpo_loss(&p, &r, &t, &cfg).unwrap() + modpo_loss(&p, &r, &s, &cfg).unwrap();
        assert!(sum >= 2.0 * 2f64.ln() - 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences_and_skip_the_reference() {
        let (p, r) = (policy(9), policy(10));
        let cfg = AlignmentConfig::default();
        let scored = score_with_reference(&r, &[triple(0.25, -0.4)]).unwrap();
        for objective in [Objective::MultiObjective, Objective::Dpo { beta: 0.8 }] {
            let err = grad_check(&p, |m| preference_loss_and_grad(m, &scored[0], &cfg, objective), 1e-5, 400, 3).unwrap();
            assert!(err < 1e-6, "{objective:?}: relative error {err}");
        }
        // Perturbing the reference moves the loss, yet it never receives gradient.
        let mut r2 = r.clone();
        r2.b_out.values[0] += 0.5;
        let t = triple(0.25, -0.4);
        assert_ne!(modpo_loss(&p, &r, &t, &cfg).unwrap(), modpo_loss(&p, &r2, &t, &cfg).unwrap());
        let before = r.to_checkpoint().sha256();
        train_alignment(&r, &[t], &AlignmentConfig { train: TrainConfig { epochs: 3, lr: 1e-2, ..cfg.train }, ..cfg }, Objective::MultiObjective)
            .unwrap();
        assert_eq!(r.to_checkpoint().sha256(), before);
    }

    #[test]
    fn training_widens_the_winner_margin() {
        let r = policy(11);
        let triples: Vec<PreferenceTriple> = (0..6u32)
            .map(|i| PreferenceTriple { query: vec![4 + i % 3], winner: vec![5 + i % 4], loser: vec![9 - i % 2, 6], delta_au: 0.1, delta_val: 0.0 })
            .collect();
        let gap = |m: &PolicyModel| -> f64 {
            triples.iter().map(|t| m.sequence_logprob(&t.query, &t.winner).unwrap() - m.sequence_logprob(&t.query, &t.loser).unwrap()).sum::<f64>()
        };
        let cfg = AlignmentConfig { train: TrainConfig { epochs: 10, lr: 1e-2, batch_size: 2, ..Default::default() }, ..Default::default() };
        let (aligned, curve) = train_alignment(&r, &triples, &cfg, Objective::MultiObjective).unwrap();
        assert!(gap(&aligned) > gap(&r));
        assert!(curve.last().unwrap() < &curve[0]);
    }

    #[test]
    fn weight_validation() {
        assert!(AlignmentConfig::default().validate().is_ok());
        assert!(AlignmentConfig { w_rel: 0.0, w_au: 0.5, w_val: 0.5, ..Default::default() }.validate().is_err());
        assert!(AlignmentConfig { w_rel: 0.5, w_au: 0.5, w_val: 0.5, ..Default::default() }.validate().is_err());
        let c = AlignmentConfig::default().without_authenticity();
        assert!(c.validate().is_ok() && c.w_au == 0.0 && c.w_rel == 0.5 && (c.w_val - 0.5).abs() < 1e-12);
        let c = AlignmentConfig::default().without_value();
        assert!(c.validate().is_ok() && c.w_val == 0.0 && c.w_rel == 0.5);
    }
}
