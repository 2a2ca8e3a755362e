use serde::{Deserialize, Serialize};

use super::encoder::SequenceEncoder;
use crate::corpus::{RelevanceLabel, Text, TokenId};
use crate::nn::{fit, ops, Checkpoint, ParamTensor, Parameters, TrainConfig};
use crate::util::{derive_seed, rng, spearman};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Fraction of each dataset held out for evaluation.
    pub holdout_fraction: f64,
    pub relevance: TrainConfig,
    pub authenticity: TrainConfig,
    pub value: TrainConfig,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        let train = TrainConfig { epochs: 30, lr: 1e-2, batch_size: 32, warmup_fraction: 0.05, weight_decay: 0.1, seed: 0 };
        Self {
            embed_dim: 32,
            hidden_dim: 64,
            holdout_fraction: 0.15,
            relevance: train,
            authenticity: train,
            value: TrainConfig { epochs: 100, ..train },
        }
    }
}

fn encoder_meta(ck: Checkpoint, enc: &SequenceEncoder) -> Checkpoint {
    ck.with_meta("vocab_size", enc.vocab_size())
        .with_meta("embed_dim", enc.dim())
        .with_meta("hidden_dim", enc.hidden())
        .with_meta("segments", enc.segments())
}

fn load_encoder(ck: &Checkpoint, prefix: &str) -> Result<SequenceEncoder> {
    let enc = SequenceEncoder {
        embed: ck.tensor(&format!("{prefix}.embed"))?,
        proj: ck.tensor(&format!("{prefix}.proj"))?,
        proj_bias: ck.tensor(&format!("{prefix}.proj_bias"))?,
    };
    let (v, d, h, s): (usize, usize, usize, usize) =
        (ck.meta_parse("vocab_size")?, ck.meta_parse("embed_dim")?, ck.meta_parse("hidden_dim")?, ck.meta_parse("segments")?);
    if enc.embed.shape != [v, d] || enc.proj.shape != [h, (d + 1) * s] || enc.proj_bias.shape != [h] {
        return Err(Error::Checkpoint(format!("{prefix}: tensor shapes disagree with metadata")));
    }
    Ok(enc)
}

fn check_head(t: &ParamTensor, shape: &[usize]) -> Result<()> {
    if t.shape != shape {
        return Err(Error::Checkpoint(format!("{}: shape {:?}, expected {shape:?}", t.name, t.shape)));
    }
    Ok(())
}

/// Four-way relevance classifier over a (query, bidword) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceModel {
    pub encoder: SequenceEncoder,
    pub head: ParamTensor,
    pub head_bias: ParamTensor,
}

impl Parameters for RelevanceModel {
    fn params(&self) -> Vec<&ParamTensor> {
        let mut p = self.encoder.params();
        p.extend([&self.head, &self.head_bias]);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut p = self.encoder.params_mut();
        p.extend([&mut self.head, &mut self.head_bias]);
        p
    }
}

impl RelevanceModel {
    pub const KIND: &'static str = "relevance";

    pub fn new(vocab_size: usize, config: &DiscriminatorConfig, seed: u64) -> Self {
        let mut r = rng(seed);
        let encoder = SequenceEncoder::new("rel", vocab_size, config.embed_dim, config.hidden_dim, 2, &mut r);
        Self {
            head: ParamTensor::zeros("rel.head", &[4, config.hidden_dim]),
            head_bias: ParamTensor::zeros("rel.head_bias", &[4]),
            encoder,
        }
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; 4];
        ops::linear(&self.head, Some(&self.head_bias), h, &mut z).expect("head shape fixed at construction");
        z
    }

    /// Probabilities in (synonym, hypernym→hyponym, hyponym→hypernym, incorrect) order.
    pub fn probs(&self, query: &[TokenId], bidword: &[TokenId]) -> [f64; 4] {
        let cache = self.encoder.forward(&[query, bidword]).expect("encoder shapes fixed at construction");
        let p = ops::softmax(&self.logits(&cache.pooled));
        [p[0], p[1], p[2], p[3]]
    }

    pub fn predict(&self, query: &[TokenId], bidword: &[TokenId]) -> RelevanceLabel {
        let p = self.probs(query, bidword);
        let best = (0..4).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        RelevanceLabel::from_index(best).expect("index < 4")
    }

    /// Cross-entropy of one example; accumulates gradients.
    pub fn loss_and_grad(&mut self, query: &[TokenId], bidword: &[TokenId], label: RelevanceLabel) -> Result<f64> {
        let cache = self.encoder.forward(&[query, bidword])?;
        let (loss, dz) = ops::cross_entropy(&self.logits(&cache.pooled), label.index())?;
        let mut dh = vec![0.0; cache.pooled.len()];
        ops::linear_backward(&mut self.head, Some(&mut self.head_bias), &cache.pooled, &dz, Some(&mut dh));
        self.encoder.backward(&cache, &dh);
        Ok(loss)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = encoder_meta(Checkpoint::new(Self::KIND), &self.encoder);
        ck.tensors = self.params().into_iter().cloned().collect();
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(Self::KIND)?;
        let encoder = load_encoder(ck, "rel")?;
        let m = Self { head: ck.tensor("rel.head")?, head_bias: ck.tensor("rel.head_bias")?, encoder };
        check_head(&m.head, &[4, m.encoder.hidden()])?;
        check_head(&m.head_bias, &[4])?;
        Ok(m)
    }
}

/// Binary classifier: is this text a real, searched bidword?
#[derive(Debug, Clone, PartialEq)]
pub struct AuthenticityModel {
    pub encoder: SequenceEncoder,
    pub head: ParamTensor,
    pub head_bias: ParamTensor,
}

impl Parameters for AuthenticityModel {
    fn params(&self) -> Vec<&ParamTensor> {
        let mut p = self.encoder.params();
        p.extend([&self.head, &self.head_bias]);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut p = self.encoder.params_mut();
        p.extend([&mut self.head, &mut self.head_bias]);
        p
    }
}

impl AuthenticityModel {
    pub const KIND: &'static str = "authenticity";

    pub fn new(vocab_size: usize, config: &DiscriminatorConfig, seed: u64) -> Self {
        let mut r = rng(seed);
        let encoder = SequenceEncoder::new("au", vocab_size, config.embed_dim, config.hidden_dim, 1, &mut r);
        Self {
            head: ParamTensor::zeros("au.head", &[1, config.hidden_dim]),
            head_bias: ParamTensor::zeros("au.head_bias", &[1]),
            encoder,
        }
    }

    fn logit(&self, h: &[f64]) -> f64 {
        let mut z = [0.0];
        ops::linear(&self.head, Some(&self.head_bias), h, &mut z).expect("head shape fixed at construction");
        z[0]
    }

    pub fn prob(&self, bidword: &[TokenId]) -> f64 {
        let cache = self.encoder.forward(&[bidword]).expect("encoder shapes fixed at construction");
        ops::sigmoid(self.logit(&cache.pooled))
    }

    pub fn loss_and_grad(&mut self, bidword: &[TokenId], label: u8) -> Result<f64> {
        let cache = self.encoder.forward(&[bidword])?;
        let (loss, dz) = ops::binary_cross_entropy(self.logit(&cache.pooled), f64::from(label))?;
        let mut dh = vec![0.0; cache.pooled.len()];
        ops::linear_backward(&mut self.head, Some(&mut self.head_bias), &cache.pooled, &[dz], Some(&mut dh));
        self.encoder.backward(&cache, &dh);
        Ok(loss)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = encoder_meta(Checkpoint::new(Self::KIND), &self.encoder);
        ck.tensors = self.params().into_iter().cloned().collect();
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(Self::KIND)?;
        let encoder = load_encoder(ck, "au")?;
        let m = Self { head: ck.tensor("au.head")?, head_bias: ck.tensor("au.head_bias")?, encoder };
        check_head(&m.head, &[1, m.encoder.hidden()])?;
        check_head(&m.head_bias, &[1])?;
        Ok(m)
    }
}

/// CPM regressor on min-max normalized targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueModel {
    pub encoder: SequenceEncoder,
    pub head: ParamTensor,
    pub head_bias: ParamTensor,
    pub cpm_min: f64,
    pub cpm_max: f64,
}

impl Parameters for ValueModel {
    fn params(&self) -> Vec<&ParamTensor> {
        let mut p = self.encoder.params();
        p.extend([&self.head, &self.head_bias]);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut p = self.encoder.params_mut();
        p.extend([&mut self.head, &mut self.head_bias]);
        p
    }
}

impl ValueModel {
    pub const KIND: &'static str = "value";

    pub fn new(vocab_size: usize, config: &DiscriminatorConfig, seed: u64) -> Self {
        let mut r = rng(seed);
        let encoder = SequenceEncoder::new("val", vocab_size, config.embed_dim, config.hidden_dim, 1, &mut r);
        Self {
            head: ParamTensor::zeros("val.head", &[1, config.hidden_dim]),
            head_bias: ParamTensor::zeros("val.head_bias", &[1]),
            encoder,
            cpm_min: 0.0,
            cpm_max: 1.0,
        }
    }

    fn output(&self, h: &[f64]) -> f64 {
        let mut z = [0.0];
        ops::linear(&self.head, Some(&self.head_bias), h, &mut z).expect("head shape fixed at construction");
        z[0]
    }

    /// Maps a raw CPM onto the model's normalized scale.
    pub fn normalize(&self, cpm: f64) -> f64 {
        let span = self.cpm_max - self.cpm_min;
        if span > 0.0 {
            (cpm - self.cpm_min) / span
        } else {
            0.0
        }
    }

    /// Normalized CPM estimate.
    pub fn estimate(&self, bidword: &[TokenId]) -> f64 {
        let cache = self.encoder.forward(&[bidword]).expect("encoder shapes fixed at construction");
        self.output(&cache.pooled)
    }

    /// Estimate in CPM units.
    pub fn estimate_cpm(&self, bidword: &[TokenId]) -> f64 {
        self.cpm_min + self.estimate(bidword) * (self.cpm_max - self.cpm_min)
    }

    /// Squared error against an already normalized target.
    pub fn loss_and_grad(&mut self, bidword: &[TokenId], target: f64) -> Result<f64> {
        let cache = self.encoder.forward(&[bidword])?;
        let (loss, dz) = ops::mse(self.output(&cache.pooled), target)?;
        let mut dh = vec![0.0; cache.pooled.len()];
        ops::linear_backward(&mut self.head, Some(&mut self.head_bias), &cache.pooled, &[dz], Some(&mut dh));
        self.encoder.backward(&cache, &dh);
        Ok(loss)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = encoder_meta(Checkpoint::new(Self::KIND), &self.encoder)
            .with_meta("cpm_min", format!("{:?}", self.cpm_min))
            .with_meta("cpm_max", format!("{:?}", self.cpm_max));
        ck.tensors = self.params().into_iter().cloned().collect();
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(Self::KIND)?;
        let encoder = load_encoder(ck, "val")?;
        let m = Self {
            head: ck.tensor("val.head")?,
            head_bias: ck.tensor("val.head_bias")?,
            encoder,
            cpm_min: ck.meta_parse("cpm_min")?,
            cpm_max: ck.meta_parse("cpm_max")?,
        };
        check_head(&m.head, &[1, m.encoder.hidden()])?;
        check_head(&m.head_bias, &[1])?;
        Ok(m)
    }
}

pub fn train_relevance(
    model: &mut RelevanceModel,
    data: &[(Text, Text, RelevanceLabel)],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    fit(model, data, config, "relevance", |m, (q, b, y)| m.loss_and_grad(q, b, *y))
}

pub fn train_authenticity(model: &mut AuthenticityModel, data: &[(Text, u8)], config: &TrainConfig) -> Result<Vec<f64>> {
    fit(model, data, config, "authenticity", |m, (b, y)| m.loss_and_grad(b, *y))
}

/// Fixes the normalization range from `data`, then regresses on normalized CPM.
pub fn train_value(model: &mut ValueModel, data: &[(Text, f64)], config: &TrainConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("value: no training examples".into()));
    }
    model.cpm_min = data.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    model.cpm_max = data.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
    let normalized: Vec<(Text, f64)> = data.iter().map(|(b, y)| (b.clone(), model.normalize(*y))).collect();
    let config = TrainConfig { seed: derive_seed(config.seed, "value"), ..*config };
    fit(model, &normalized, &config, "value", |m, (b, y)| m.loss_and_grad(b, *y))
}

pub fn relevance_accuracy(model: &RelevanceModel, data: &[(Text, Text, RelevanceLabel)]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data.iter().filter(|(q, b, y)| model.predict(q, b) == *y).count();
    hits as f64 / data.len() as f64
}

pub fn authenticity_accuracy(model: &AuthenticityModel, data: &[(Text, u8)]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data.iter().filter(|(b, y)| u8::from(model.prob(b) > 0.5) == *y).count();
    hits as f64 / data.len() as f64
}

/// Held-out regression quality, all in normalized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueFit {
    pub mse: f64,
    pub variance: f64,
    pub r2: f64,
    pub spearman: f64,
}

pub fn value_fit(model: &ValueModel, data: &[(Text, f64)]) -> ValueFit {
    let targets: Vec<f64> = data.iter().map(|(_, y)| model.normalize(*y)).collect();
    let preds: Vec<f64> = data.iter().map(|(b, _)| model.estimate(b)).collect();
    let n = data.len().max(1) as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let variance = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let mse = preds.iter().zip(&targets).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / n;
    let r2 = if variance > 0.0 { 1.0 - mse / variance } else { 0.0 };
    ValueFit { mse, variance, r2, spearman: spearman(&preds, &targets) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    fn cfg() -> DiscriminatorConfig {
        DiscriminatorConfig { embed_dim: 4, hidden_dim: 5, ..Default::default() }
    }

    fn perturb_heads<M: Parameters>(m: &mut M, seed: u64) {
        use rand::Rng as _;
        let mut r = rng(seed);
        for p in m.params_mut() {
            for v in &mut p.values {
                *v += r.random_range(-0.3..0.3);
            }
        }
    }

    #[test]
    fn untrained_outputs_are_neutral() {
        let c = DiscriminatorConfig::default();
        let rel = RelevanceModel::new(20, &c, 1);
        assert_eq!(rel.probs(&[5, 6], &[7]), [0.25; 4]);
        assert_eq!(AuthenticityModel::new(20, &c, 1).prob(&[5]), 0.5);
        assert_eq!(ValueModel::new(20, &c, 1).estimate(&[5]), 0.0);
    }

    #[test]
    fn out_of_vocabulary_and_empty_inputs_are_tolerated() {
        let rel = RelevanceModel::new(10, &cfg(), 2);
        let p = rel.probs(&[999], &[]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relevance_gradient_matches_finite_differences() {
        let mut m = RelevanceModel::new(12, &cfg(), 3);
        perturb_heads(&mut m, 4);
        let err = grad_check(&m, |m| m.loss_and_grad(&[4, 5, 4], &[6, 7], RelevanceLabel::HyponymToHypernym), 1e-5, 400, 0)
            .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn authenticity_gradient_matches_finite_differences() {
        let mut m = AuthenticityModel::new(12, &cfg(), 5);
        perturb_heads(&mut m, 6);
        let err = grad_check(&m, |m| m.loss_and_grad(&[4, 9], 1), 1e-5, 400, 0).unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn value_gradient_matches_finite_differences() {
        let mut m = ValueModel::new(12, &cfg(), 7);
        perturb_heads(&mut m, 8);
        let err = grad_check(&m, |m| m.loss_and_grad(&[10, 11, 4], 0.7), 1e-5, 400, 0).unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn single_example_is_memorized() {
        let mut m = RelevanceModel::new(12, &cfg(), 9);
        let data = vec![(vec![4, 5], vec![6], RelevanceLabel::HypernymToHyponym)];
        let tc = TrainConfig { epochs: 300, lr: 1e-2, batch_size: 1, ..Default::default() };
        let curve = train_relevance(&mut m, &data, &tc).unwrap();
        assert!((curve[0] - 4f64.ln()).abs() < 1e-9);
        assert!(*curve.last().unwrap() < 0.05, "{curve:?}");
    }

    #[test]
    fn constant_target_is_learned() {
        let mut m = ValueModel::new(12, &cfg(), 10);
        let data: Vec<(Text, f64)> = (4..12).map(|t| (vec![t], 3.0)).chain([(vec![4, 5], 5.0)]).collect();
        let tc = TrainConfig { epochs: 200, lr: 1e-2, batch_size: 4, ..Default::default() };
        train_value(&mut m, &data[..8], &tc).unwrap();
        // Degenerate range: all targets normalize to 0.
        assert_eq!(m.normalize(3.0), 0.0);
        assert!(value_fit(&m, &data[..8]).mse < 1e-4);
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<(Text, u8)> = (4..12).map(|t| (vec![t], (t % 2) as u8)).collect();
        let tc = TrainConfig { epochs: 3, lr: 1e-2, batch_size: 3, seed: 11, ..Default::default() };
        let run = || {
            let mut m = AuthenticityModel::new(12, &cfg(), 12);
            train_authenticity(&mut m, &data, &tc).unwrap();
            m
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoints_round_trip() {
        let mut v = ValueModel::new(12, &cfg(), 13);
        perturb_heads(&mut v, 14);
        v.cpm_min = 0.1;
        v.cpm_max = 7.3;
        let back = ValueModel::from_checkpoint(&Checkpoint::from_bytes(&v.to_checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, v);
        let r = RelevanceModel::new(12, &cfg(), 15);
        assert_eq!(RelevanceModel::from_checkpoint(&r.to_checkpoint()).unwrap(), r);
        assert!(AuthenticityModel::from_checkpoint(&r.to_checkpoint()).is_err());
    }
}
