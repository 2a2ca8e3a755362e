use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentConfig;
use crate::corpus::CorpusConfig;
use crate::discriminators::DiscriminatorConfig;
use crate::nn::TrainConfig;
use crate::policy::{DecodeConfig, PolicyConfig};
use crate::serving::ServingConfig;
use crate::util::sha256_hex;
use crate::{Error, Result};

/// A policy training stage with an optional cap on sampled pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyStage {
    pub train: TrainConfig,
    /// 0 keeps every pair.
    pub max_pairs: usize,
}

impl Default for PolicyStage {
    fn default() -> Self {
        Self { train: TrainConfig::default(), max_pairs: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentStage {
    pub loss: AlignmentConfig,
    /// Number of (non-evaluation) queries that contribute preference pairs.
    pub queries: usize,
    pub candidate_beam: usize,
    pub candidate_samples: usize,
}

impl Default for AlignmentStage {
    fn default() -> Self {
        Self { loss: AlignmentConfig::default(), queries: 1500, candidate_beam: 8, candidate_samples: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalStage {
    /// Golden queries held out from every training stage.
    pub queries: usize,
    /// `all` or a comma-separated arm list.
    pub arms: String,
}

impl Default for EvalStage {
    fn default() -> Self {
        Self { queries: 500, arms: "all".into() }
    }
}

/// The whole run in one file. Fields whose default is a published
/// reference setting are listed by [`RunConfig::reference_values`]; changing
/// one requires naming it in `overrides`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub overrides: Vec<String>,
    pub corpus: CorpusConfig,
    pub discriminators: DiscriminatorConfig,
    pub policy: PolicyConfig,
    pub ppt: PolicyStage,
    pub sft: PolicyStage,
    pub decode: DecodeConfig,
    pub alignment: AlignmentStage,
    pub eval: EvalStage,
    pub serving: ServingConfig,
}

/// Output root used when the config leaves `output_dir` empty.
pub const OUTPUT_ENV: &str = "MOBGM_OUT";

impl Default for RunConfig {
    /// Reference hyperparameters wherever one is published.
    fn default() -> Self {
        let adamw = |epochs, lr| TrainConfig { epochs, lr, batch_size: 64, warmup_fraction: 0.05, weight_decay: 0.01, seed: 0 };
        Self {
            seed: 1,
            output_dir: PathBuf::new(),
            overrides: Vec::new(),
            corpus: CorpusConfig::default(),
            discriminators: DiscriminatorConfig::default(),
            policy: PolicyConfig::default(),
            ppt: PolicyStage { train: adamw(1, 1e-5), max_pairs: 0 },
            sft: PolicyStage { train: adamw(2, 1e-5), max_pairs: 0 },
            decode: DecodeConfig::default(),
            alignment: AlignmentStage {
                loss: AlignmentConfig { train: adamw(2, 1e-6), ..AlignmentConfig::default() },
                ..AlignmentStage::default()
            },
            eval: EvalStage::default(),
            serving: ServingConfig::default(),
        }
    }
}

impl RunConfig {
    /// The desk-scale preset: learning rates, epochs and batch sizes that
    /// move a model this small within minutes, with every departure from the
    /// reference values declared in `overrides`.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.ppt = PolicyStage {
            train: TrainConfig { epochs: 1, lr: 3e-3, batch_size: 32, weight_decay: 0.0, ..c.ppt.train },
            max_pairs: 20_000,
        };
        c.sft = PolicyStage {
            train: TrainConfig { epochs: 2, lr: 3e-3, batch_size: 32, weight_decay: 0.0, ..c.sft.train },
            max_pairs: 40_000,
        };
        c.alignment.loss.train = TrainConfig { epochs: 2, lr: 3e-3, batch_size: 32, weight_decay: 0.0, ..c.alignment.loss.train };
        c.overrides = c.changed_reference_values();
        c
    }

    /// A seconds-scale run of every stage on a small corpus with small
    /// models, for tests and demos. Metric values are far below desk scale.
    pub fn smoke() -> Self {
        let mut c = Self::desk();
        c.corpus.queries.n_unique = 2_000;
        c.corpus.queries.total_events = 100_000;
        c.corpus.datasets.relevance_pairs = 2_000;
        let d = &mut c.discriminators;
        (d.embed_dim, d.hidden_dim) = (16, 32);
        d.relevance.epochs = 10;
        d.authenticity.epochs = 10;
        d.value.epochs = 20;
        c.policy = PolicyConfig { embed_dim: 16, hidden_dim: 32, ..c.policy };
        c.ppt.max_pairs = 5_000;
        c.sft.max_pairs = 20_000;
        c.decode.beam_width = 4;
        c.alignment.queries = 30;
        c.alignment.candidate_beam = 4;
        c.alignment.candidate_samples = 4;
        c.eval.queries = 20;
        c.serving.cache_queries = 10;
        c.serving.replay_queries = 40;
        c.serving.bidwords_per_query = 5;
        c.serving.sample_retries = 10;
        c.overrides = c.changed_reference_values();
        c
    }

    /// `(key, current value, reference value)` for every reference field.
    pub fn reference_values(&self) -> Vec<(&'static str, f64, f64)> {
        let a = &self.alignment.loss;
        vec![
            ("ppt.train.epochs", self.ppt.train.epochs as f64, 1.0),
            ("ppt.train.lr", self.ppt.train.lr, 1e-5),
            ("ppt.train.batch_size", self.ppt.train.batch_size as f64, 64.0),
            ("sft.train.epochs", self.sft.train.epochs as f64, 2.0),
            ("sft.train.lr", self.sft.train.lr, 1e-5),
            ("sft.train.batch_size", self.sft.train.batch_size as f64, 64.0),
            ("alignment.loss.train.epochs", a.train.epochs as f64, 2.0),
            ("alignment.loss.train.lr", a.train.lr, 1e-6),
            ("alignment.loss.train.batch_size", a.train.batch_size as f64, 64.0),
            ("alignment.loss.beta_w", a.beta_w, 1.0),
            ("alignment.loss.beta_l", a.beta_l, 0.25),
            ("alignment.loss.w_rel", a.w_rel, 0.5),
            ("alignment.loss.w_au", a.w_au, 0.2),
            ("alignment.loss.w_val", a.w_val, 0.3),
            ("decode.length_penalty", self.decode.length_penalty, 2.0),
            ("decode.max_new_tokens", self.decode.max_new_tokens as f64, 16.0),
        ]
    }

    fn changed_reference_values(&self) -> Vec<String> {
        self.reference_values().into_iter().filter(|(_, v, p)| v != p).map(|(k, _, _)| k.to_string()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let silent: Vec<String> =
            self.changed_reference_values().into_iter().filter(|k| !self.overrides.contains(k)).collect();
        if !silent.is_empty() {
            return Err(Error::Config(format!(
                "reference hyperparameters changed without an override entry: {}",
                silent.join(", ")
            )));
        }
        self.alignment.loss.validate()?;
        self.corpus.world.validate()?;
        if self.policy.max_len < self.decode.max_new_tokens {
            return Err(Error::Config(format!(
                "policy.max_len {} is shorter than decode.max_new_tokens {}",
                self.policy.max_len, self.decode.max_new_tokens
            )));
        }
        Ok(())
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Hash of the canonical serialization, output location excluded.
    pub fn hash(&self) -> Result<String> {
        let c = Self { output_dir: PathBuf::new(), ..self.clone() };
        Ok(sha256_hex(c.to_toml()?.as_bytes()))
    }

    /// `output_dir`, else `$MOBGM_OUT`, else `./mobgm-out`.
    pub fn output_root(&self) -> PathBuf {
        if !self.output_dir.as_os_str().is_empty() {
            return self.output_dir.clone();
        }
        std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("mobgm-out"))
    }
}
