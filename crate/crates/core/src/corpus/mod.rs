//! Synthetic e-commerce world and every dataset mined from it.
//!
//! The world is a category tree with synonym surface forms, a product
//! catalog, a bidword inventory with bids and a Zipfian query population.
//! Click logs are simulated from it, and the relevance, authenticity, CPM,
//! SFT, post-pre-training and golden datasets are derived from world ground
//! truth plus those logs.

mod clicks;
mod datasets;
mod golden;
pub mod io;
mod queries;
mod vocab;
mod world;

pub use clicks::{cpm, simulate_clicks, ClickConfig, ClickLog, ClickLogRecord};
pub use datasets::{
    authenticity_label, balance_binary, oversample_binary, derive_authenticity_dataset, derive_cpm_dataset,
    derive_ppt_pairs, derive_relevance_dataset, derive_sft_pairs, search_frequencies,
    sft_relevance_score, SftThresholds, TierMultipliers,
};
pub use golden::{build_golden_set, golden_value_scores, GoldenSet};
pub use queries::{sample_query_stream, QueryRecord, QueryStreamConfig, Tier};
pub use vocab::{Text, TokenId, Vocab, BOS, EOS, FIRST_WORD, SEP, UNK};
pub use world::{build_world, Bidword, CategoryNode, NodeId, Product, RelevanceLabel, World, WorldConfig};

use serde::{Deserialize, Serialize};

/// Every knob that shapes the world and its datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct CorpusConfig {
    pub world: WorldConfig,
    pub queries: QueryStreamConfig,
    pub clicks: ClickConfig,
    pub datasets: DatasetConfig,
}

/// Dataset derivation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub relevance_pairs: usize,
    pub authenticity_threshold: u64,
    pub sft: SftThresholds,
    pub ppt_min_clicks: u64,
    pub tier_multipliers: TierMultipliers,
    pub golden_k: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            relevance_pairs: 12_000,
            authenticity_threshold: 20,
            sft: SftThresholds::default(),
            ppt_min_clicks: 1,
            tier_multipliers: TierMultipliers::default(),
            golden_k: 10,
        }
    }
}

/// `world.toml`: enough to regenerate a written corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldManifest {
    pub seed: u64,
    pub config: CorpusConfig,
}

/// A world together with its simulated logs.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub world: World,
    pub logs: ClickLog,
}

impl Corpus {
    /// Builds the world, samples the query stream and simulates clicks.
    pub fn generate(config: &CorpusConfig, seed: u64) -> crate::Result<Self> {
        use crate::util::derive_seed;
        let mut world = build_world(&config.world, derive_seed(seed, "world"))?;
        let queries = sample_query_stream(&world, &config.queries, derive_seed(seed, "queries"))?;
        let logs = simulate_clicks(&mut world, queries, &config.clicks, derive_seed(seed, "clicks"))?;
        Ok(Self { world, logs })
    }

    /// Writes the world, logs and every derived dataset into `dir`, plus a
    /// `world.toml` recording config and seed. `dataset_seed` seeds the
    /// sampled datasets. Returns the written paths in a fixed order.
    pub fn write_files(
        &self,
        config: &CorpusConfig,
        seed: u64,
        dataset_seed: u64,
        dir: &std::path::Path,
    ) -> crate::Result<Vec<std::path::PathBuf>> {
        use crate::util::derive_seed;
        std::fs::create_dir_all(dir)?;
        let (w, l, ds, v) = (&self.world, &self.logs, &config.datasets, &self.world.vocab);
        let path = |name: &str| dir.join(name);
        let manifest = toml::to_string(&WorldManifest { seed, config: config.clone() }).map_err(|e| crate::Error::Config(e.to_string()))?;
        std::fs::write(path("world.toml"), manifest)?;
        std::fs::write(path("world.tsv"), w.to_tsv())?;
        io::write_vocab(&path("vocab.txt"), v)?;
        io::write_queries(&path("queries.tsv"), v, l)?;
        io::write_clicks(&path("clicks.tsv"), v, l)?;
        io::write_golden(&path("golden.tsv"), v, &build_golden_set(w, l, ds.golden_k))?;
        let rel = derive_relevance_dataset(w, ds.relevance_pairs, derive_seed(derive_seed(dataset_seed, "discriminators"), "rel-data"))?;
        io::write_relevance(&path("relevance.tsv"), v, &rel)?;
        io::write_labelled(&path("authenticity.tsv"), v, &derive_authenticity_dataset(w, l, ds.authenticity_threshold)?)?;
        io::write_values(&path("cpm.tsv"), v, &derive_cpm_dataset(l)?)?;
        let sft = derive_sft_pairs(w, l, &ds.sft, ds.authenticity_threshold, &ds.tier_multipliers, derive_seed(dataset_seed, "sft-data"))?;
        io::write_pairs(&path("sft.tsv"), v, &sft)?;
        let ppt = derive_ppt_pairs(w, l, ds.ppt_min_clicks, &ds.tier_multipliers, derive_seed(dataset_seed, "ppt-data"))?;
        io::write_pairs(&path("ppt.tsv"), v, &ppt)?;
        Ok(Self::FILES.iter().map(|f| path(f)).collect())
    }

    /// Regenerates the corpus recorded in `dir/world.toml` and checks it
    /// against `dir/world.tsv`.
    pub fn load_dir(dir: &std::path::Path) -> crate::Result<(Self, WorldManifest)> {
        let path = dir.join("world.toml");
        let m: WorldManifest = toml::from_str(&std::fs::read_to_string(&path)?)
            .map_err(|e| crate::Error::Config(format!("{}: {e}", path.display())))?;
        let c = Self::generate(&m.config, m.seed)?;
        if std::fs::read_to_string(dir.join("world.tsv"))? != c.world.to_tsv() {
            return Err(crate::Error::Precondition(format!("{} does not match its world.toml", dir.display())));
        }
        Ok((c, m))
    }

    pub const FILES: [&'static str; 11] = [
        "world.toml",
        "world.tsv",
        "vocab.txt",
        "queries.tsv",
        "clicks.tsv",
        "golden.tsv",
        "relevance.tsv",
        "authenticity.tsv",
        "cpm.tsv",
        "sft.tsv",
        "ppt.tsv",
    ];
}
