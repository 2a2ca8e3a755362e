use crate::corpus::{TokenId, UNK};
use crate::nn::{ops, ParamTensor};
use crate::util::Rng;
use crate::Result;

/// Token embeddings, mean-pooled per segment, then one tanh layer.
///
/// A pair input `q [SEP] b` is two segments; each is pooled on its own and
/// the pooled vectors are concatenated before the projection, so the model
/// can tell which side a token came from. Each segment also contributes
/// `ln(len)`: a mean alone cannot tell `x` from `x x x x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEncoder {
    pub embed: ParamTensor,
    pub proj: ParamTensor,
    pub proj_bias: ParamTensor,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    segments: Vec<Vec<usize>>,
    input: Vec<f64>,
    pub pooled: Vec<f64>,
}

impl SequenceEncoder {
    pub fn new(prefix: &str, vocab_size: usize, dim: usize, hidden: usize, segments: usize, rng: &mut Rng) -> Self {
        let in_dim = (dim + 1) * segments;
        Self {
            embed: ParamTensor::uniform(format!("{prefix}.embed"), &[vocab_size, dim], 0.5, rng),
            proj: ParamTensor::uniform(format!("{prefix}.proj"), &[hidden, in_dim], (1.0 / in_dim as f64).sqrt(), rng),
            proj_bias: ParamTensor::zeros(format!("{prefix}.proj_bias"), &[hidden]),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.shape[0]
    }

    pub fn dim(&self) -> usize {
        self.embed.shape[1]
    }

    pub fn hidden(&self) -> usize {
        self.proj.shape[0]
    }

    pub fn segments(&self) -> usize {
        self.proj.shape[1] / (self.dim() + 1)
    }

    fn ids(&self, tokens: &[TokenId]) -> Vec<usize> {
        let v = self.vocab_size();
        let ids: Vec<usize> = tokens
            .iter()
            .map(|&t| if (t as usize) < v { t as usize } else { UNK as usize })
            .collect();
        if ids.is_empty() {
            vec![UNK as usize]
        } else {
            ids
        }
    }

    pub fn forward(&self, segments: &[&[TokenId]]) -> Result<EncoderCache> {
        let d = self.dim();
        let segs: Vec<Vec<usize>> = segments.iter().map(|s| self.ids(s)).collect();
        let mut input = Vec::with_capacity((d + 1) * segs.len());
        for seg in &segs {
            let rows: Vec<&[f64]> = seg.iter().map(|&i| self.embed.row(i)).collect();
            input.extend(ops::mean_pool(&rows)?);
            input.push((seg.len() as f64).ln());
        }
        let mut pooled = vec![0.0; self.hidden()];
        ops::linear(&self.proj, Some(&self.proj_bias), &input, &mut pooled)?;
        ops::tanh_inplace(&mut pooled);
        Ok(EncoderCache { segments: segs, input, pooled })
    }

    pub fn backward(&mut self, cache: &EncoderCache, d_pooled: &[f64]) {
        let d_pre = ops::tanh_backward(&cache.pooled, d_pooled);
        let mut d_input = vec![0.0; cache.input.len()];
        ops::linear_backward(&mut self.proj, Some(&mut self.proj_bias), &cache.input, &d_pre, Some(&mut d_input));
        let d = self.dim();
        for (s, seg) in cache.segments.iter().enumerate() {
            let start = s * (d + 1);
            let d_row = ops::mean_pool_backward(seg.len(), &d_input[start..start + d]);
            for &id in seg {
                ops::embedding_backward(&mut self.embed, id, &d_row);
            }
        }
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.embed, &self.proj, &self.proj_bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.embed, &mut self.proj, &mut self.proj_bias]
    }
}
