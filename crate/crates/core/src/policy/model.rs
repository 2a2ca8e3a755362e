use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, BOS, EOS, FIRST_WORD, UNK};
use crate::nn::{ops, Checkpoint, ParamTensor, Parameters};
use crate::util::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Longest target the model can score or emit, EOS excluded.
    pub max_len: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { embed_dim: 48, hidden_dim: 128, max_len: 16 }
    }
}

/// Conditional next-token model.
///
/// At step `i` the input is `[mean E(prompt); mean E(prefix) or E(BOS);
/// E(last) + P(i)]`, followed by one tanh layer and a softmax over every
/// word plus EOS. The prompt mean also feeds the logits directly.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub embed: ParamTensor,
    pub pos: ParamTensor,
    pub w1: ParamTensor,
    pub b1: ParamTensor,
    pub w_out: ParamTensor,
    pub w_skip: ParamTensor,
    pub b_out: ParamTensor,
}

/// Per-prompt quantities shared by every decoding step.
#[derive(Debug, Clone)]
pub struct PromptContext {
    prompt: Vec<usize>,
    c_q: Vec<f64>,
    /// `W1[:, q] c_q + b1`
    q_hidden: Vec<f64>,
    /// `W_skip c_q + b_out`
    skip: Vec<f64>,
}

struct Step {
    rest: Vec<f64>,
    h: Vec<f64>,
    logp: Vec<f64>,
}

impl Parameters for PolicyModel {
    fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.embed, &self.pos, &self.w1, &self.b1, &self.w_out, &self.w_skip, &self.b_out]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![
            &mut self.embed,
            &mut self.pos,
            &mut self.w1,
            &mut self.b1,
            &mut self.w_out,
            &mut self.w_skip,
            &mut self.b_out,
        ]
    }
}

/// `out += W[:, start..start + x.len()] x`
fn matvec_cols(w: &ParamTensor, start: usize, x: &[f64], out: &mut [f64]) {
    let cols = w.shape[1];
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w.values[r * cols + start..r * cols + start + x.len()];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

impl PolicyModel {
    pub const KIND: &'static str = "policy";

    pub fn new(vocab_size: usize, config: &PolicyConfig, seed: u64) -> Self {
        let mut r = rng(seed);
        let (d, h) = (config.embed_dim, config.hidden_dim);
        let n_out = vocab_size - FIRST_WORD as usize + 1;
        Self {
            embed: ParamTensor::uniform("policy.embed", &[vocab_size, d], 0.5, &mut r),
            pos: ParamTensor::uniform("policy.pos", &[config.max_len, d], 0.1, &mut r),
            w1: ParamTensor::uniform("policy.w1", &[h, 3 * d], (1.0 / (3 * d) as f64).sqrt(), &mut r),
            b1: ParamTensor::zeros("policy.b1", &[h]),
            w_out: ParamTensor::zeros("policy.w_out", &[n_out, h]),
            w_skip: ParamTensor::zeros("policy.w_skip", &[n_out, d]),
            b_out: ParamTensor::zeros("policy.b_out", &[n_out]),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.shape[0]
    }

    pub fn dim(&self) -> usize {
        self.embed.shape[1]
    }

    pub fn hidden(&self) -> usize {
        self.w1.shape[0]
    }

    pub fn max_len(&self) -> usize {
        self.pos.shape[0]
    }

    /// Size of the output distribution: every word plus EOS.
    pub fn n_out(&self) -> usize {
        self.w_out.shape[0]
    }

    /// Output index of EOS.
    pub fn eos_index(&self) -> usize {
        self.n_out() - 1
    }

    pub fn out_token(&self, j: usize) -> TokenId {
        if j == self.eos_index() {
            EOS
        } else {
            FIRST_WORD + j as TokenId
        }
    }

    /// `None` for tokens the model can never emit.
    pub fn out_index(&self, token: TokenId) -> Option<usize> {
        if token == EOS {
            Some(self.eos_index())
        } else if token >= FIRST_WORD && (token as usize) < self.vocab_size() {
            Some((token - FIRST_WORD) as usize)
        } else {
            None
        }
    }

    fn input_id(&self, t: TokenId) -> usize {
        if (t as usize) < self.vocab_size() {
            t as usize
        } else {
            UNK as usize
        }
    }

    pub fn context(&self, prompt: &[TokenId]) -> PromptContext {
        let mut ids: Vec<usize> = prompt.iter().map(|&t| self.input_id(t)).collect();
        if ids.is_empty() {
            ids.push(UNK as usize);
        }
        let rows: Vec<&[f64]> = ids.iter().map(|&i| self.embed.row(i)).collect();
        let c_q = ops::mean_pool(&rows).expect("rows share the embedding width");
        let mut q_hidden = self.b1.values.clone();
        matvec_cols(&self.w1, 0, &c_q, &mut q_hidden);
        let mut skip = vec![0.0; self.n_out()];
        ops::linear(&self.w_skip, Some(&self.b_out), &c_q, &mut skip).expect("skip shape fixed at construction");
        PromptContext { prompt: ids, c_q, q_hidden, skip }
    }

    fn step(&self, ctx: &PromptContext, prefix: &[TokenId]) -> Step {
        let d = self.dim();
        let mut rest = vec![0.0; 2 * d];
        if prefix.is_empty() {
            rest[..d].copy_from_slice(self.embed.row(BOS as usize));
        } else {
            let inv = 1.0 / prefix.len() as f64;
            for &t in prefix {
                for (r, e) in rest[..d].iter_mut().zip(self.embed.row(self.input_id(t))) {
                    *r += e * inv;
                }
            }
        }
        let last = prefix.last().map_or(BOS as usize, |&t| self.input_id(t));
        let p = self.pos.row(prefix.len().min(self.max_len() - 1));
        for ((r, e), pv) in rest[d..].iter_mut().zip(self.embed.row(last)).zip(p) {
            *r = e + pv;
        }
        let mut h = ctx.q_hidden.clone();
        matvec_cols(&self.w1, d, &rest, &mut h);
        ops::tanh_inplace(&mut h);
        let mut logits = vec![0.0; self.n_out()];
        ops::linear(&self.w_out, None, &h, &mut logits).expect("output shape fixed at construction");
        for (l, s) in logits.iter_mut().zip(&ctx.skip) {
            *l += s;
        }
        Step { rest, h, logp: ops::log_softmax(&logits) }
    }

    /// Log-probabilities of every output (words then EOS) after `prefix`.
    pub fn next_logprobs(&self, ctx: &PromptContext, prefix: &[TokenId]) -> Vec<f64> {
        self.step(ctx, prefix).logp
    }

    /// Output indices of `target`, with EOS appended when the target is
    /// shorter than `max_len` (at `max_len` termination is forced).
    fn target_indices(&self, target: &[TokenId]) -> Result<Vec<usize>> {
        if target.len() > self.max_len() {
            return Err(Error::Precondition(format!(
                "target of {} tokens exceeds max_len {}",
                target.len(),
                self.max_len()
            )));
        }
        let mut idx = Vec::with_capacity(target.len() + 1);
        for &t in target {
            match self.out_index(t) {
                Some(j) if t != EOS => idx.push(j),
                _ => return Err(Error::Precondition(format!("token {t} cannot be generated"))),
            }
        }
        if target.len() < self.max_len() {
            idx.push(self.eos_index());
        }
        Ok(idx)
    }

    /// `Σ_i log π(b_i | q, b_<i)`, EOS included.
    pub fn sequence_logprob(&self, prompt: &[TokenId], target: &[TokenId]) -> Result<f64> {
        let idx = self.target_indices(target)?;
        let ctx = self.context(prompt);
        Ok(idx.iter().enumerate().map(|(i, &j)| self.step(&ctx, &target[..i]).logp[j]).sum())
    }

    /// Returns the sequence log-probability and adds `scale · ∇ logprob`
    /// into the gradient buffers.
    pub fn logprob_and_grad(&mut self, prompt: &[TokenId], target: &[TokenId], scale: f64) -> Result<f64> {
        let idx = self.target_indices(target)?;
        let ctx = self.context(prompt);
        let d = self.dim();
        let mut total = 0.0;
        let mut dc_q = vec![0.0; d];
        for (i, &j) in idx.iter().enumerate() {
            let prefix = &target[..i];
            let st = self.step(&ctx, prefix);
            total += st.logp[j];
            // ∂ log p_j / ∂ logits = onehot(j) − p
            let mut dz: Vec<f64> = st.logp.iter().map(|lp| -scale * lp.exp()).collect();
            dz[j] += scale;
            let mut dh = vec![0.0; self.hidden()];
            ops::linear_backward(&mut self.w_out, None, &st.h, &dz, Some(&mut dh));
            ops::linear_backward(&mut self.w_skip, Some(&mut self.b_out), &ctx.c_q, &dz, Some(&mut dc_q));
            let dpre = ops::tanh_backward(&st.h, &dh);
            let x: Vec<f64> = ctx.c_q.iter().chain(&st.rest).copied().collect();
            let mut dx = vec![0.0; 3 * d];
            ops::linear_backward(&mut self.w1, Some(&mut self.b1), &x, &dpre, Some(&mut dx));
            for (a, b) in dc_q.iter_mut().zip(&dx[..d]) {
                *a += b;
            }
            if prefix.is_empty() {
                ops::embedding_backward(&mut self.embed, BOS as usize, &dx[d..2 * d]);
            } else {
                let share = ops::mean_pool_backward(prefix.len(), &dx[d..2 * d]);
                for &t in prefix {
                    let id = self.input_id(t);
                    ops::embedding_backward(&mut self.embed, id, &share);
                }
            }
            let last = prefix.last().map_or(BOS as usize, |&t| self.input_id(t));
            ops::embedding_backward(&mut self.embed, last, &dx[2 * d..]);
            let slot = prefix.len().min(self.max_len() - 1);
            ops::embedding_backward(&mut self.pos, slot, &dx[2 * d..]);
        }
        let share = ops::mean_pool_backward(ctx.prompt.len(), &dc_q);
        for &id in &ctx.prompt {
            ops::embedding_backward(&mut self.embed, id, &share);
        }
        ops::finite(total, "sequence logprob")
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(Self::KIND)
            .with_meta("vocab_size", self.vocab_size())
            .with_meta("embed_dim", self.dim())
            .with_meta("hidden_dim", self.hidden())
            .with_meta("max_len", self.max_len());
        ck.tensors = self.params().into_iter().cloned().collect();
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(Self::KIND)?;
        let v: usize = ck.meta_parse("vocab_size")?;
        let config = PolicyConfig {
            embed_dim: ck.meta_parse("embed_dim")?,
            hidden_dim: ck.meta_parse("hidden_dim")?,
            max_len: ck.meta_parse("max_len")?,
        };
        let mut m = Self::new(v, &config, 0);
        for p in m.params_mut() {
            let t = ck.tensor(&p.name)?;
            if t.shape != p.shape {
                return Err(Error::Checkpoint(format!("{}: shape {:?}, expected {:?}", t.name, t.shape, p.shape)));
            }
            *p = t;
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SEP;
    use crate::nn::grad_check;

    fn tiny(words: usize, max_len: usize, seed: u64) -> PolicyModel {
        let cfg = PolicyConfig { embed_dim: 3, hidden_dim: 4, max_len };
        let mut m = PolicyModel::new(FIRST_WORD as usize + words, &cfg, seed);
        use rand::Rng as _;
        let mut r = rng(seed + 100);
        for p in m.params_mut() {
            for v in &mut p.values {
                *v += r.random_range(-0.8..0.8);
            }
        }
        m
    }

    fn all_targets(words: usize, max_len: usize) -> Vec<Vec<TokenId>> {
        let mut out = vec![vec![]];
        let mut frontier = vec![vec![]];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for s in &frontier {
                for w in 0..words {
                    let mut t: Vec<TokenId> = s.clone();
                    t.push(FIRST_WORD + w as TokenId);
                    next.push(t);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    #[test]
    fn untrained_distribution_is_uniform_and_a_simplex() {
        let m = PolicyModel::new(10, &PolicyConfig::default(), 1);
        let lp = m.next_logprobs(&m.context(&[4, 5]), &[6]);
        assert_eq!(lp.len(), 7);
        let s: f64 = lp.iter().map(|l| l.exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(lp.iter().all(|l| (l - lp[0]).abs() < 1e-12));
    }

    #[test]
    fn empty_target_scores_a_single_eos_step() {
        let m = tiny(2, 2, 3);
        let ctx = m.context(&[4]);
        let eos = m.next_logprobs(&ctx, &[])[m.eos_index()];
        assert_eq!(m.sequence_logprob(&[4], &[]).unwrap(), eos);
        assert!(eos < 0.0);
    }

    #[test]
    fn enumeration_of_every_target_sums_to_one() {
        // vocab {a, b}, max length 2: ε, a, b, aa, ab, ba, bb.
        let m = tiny(2, 2, 4);
        let targets = all_targets(2, 2);
        assert_eq!(targets.len(), 7);
        let mass: f64 = targets.iter().map(|t| m.sequence_logprob(&[5, 4], t).unwrap().exp()).sum();
        assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
    }

    #[test]
    fn overlong_and_special_targets_are_rejected() {
        let m = tiny(2, 2, 5);
        assert!(m.sequence_logprob(&[4], &[4, 4, 4]).is_err());
        assert!(m.sequence_logprob(&[4], &[SEP]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = tiny(4, 3, 6);
        let err = grad_check(&m, |m| m.logprob_and_grad(&[4, 7, 7], &[5, 6], -1.0).map(|lp| -lp), 1e-5, 300, 1).unwrap();
        assert!(err < 1e-6, "relative error {err}");
        let err = grad_check(&m, |m| m.logprob_and_grad(&[], &[5, 5, 6], 0.3).map(|lp| 0.3 * lp), 1e-5, 300, 2).unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = tiny(3, 4, 7);
        let back = PolicyModel::from_checkpoint(&Checkpoint::from_bytes(&m.to_checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
