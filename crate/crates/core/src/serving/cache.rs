use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;

use crate::corpus::{Text, TokenId, Vocab};
use crate::policy::{beam_search, sample, DecodeConfig, PolicyModel};
use crate::util::derive_seed;
use crate::{Error, Result};

const CACHE_MAGIC: &str = "#mobgm-cache";
const CACHE_VERSION: u32 = 1;

/// Precomputed rewrites for head queries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BidwordCache {
    pub entries: BTreeMap<Text, Vec<Text>>,
    /// Queries that could not reach the full list within the retry cap.
    pub short: BTreeSet<Text>,
    /// Checkpoint hash of the model that produced the entries.
    pub model_id: String,
    /// Logical build stamp (the serving seed), so rebuilds are byte-identical.
    pub built_at: u64,
}

/// The rewrite list for one query: beam outputs first, then distinct
/// temperature-1 samples until `n` bidwords or `retries` draws. Every random
/// draw is seeded from `(seed, query)`, so the cache and the real-time path
/// agree.
pub fn generate_bidwords(
    model: &PolicyModel,
    query: &[TokenId],
    decode: &DecodeConfig,
    n: usize,
    retries: usize,
    seed: u64,
) -> Result<(Vec<Text>, bool)> {
    let mut out: Vec<Text> = Vec::with_capacity(n);
    for (b, _) in beam_search(model, query, decode)? {
        if out.len() < n && !b.is_empty() && !out.contains(&b) {
            out.push(b);
        }
    }
    let qseed = derive_seed(seed, &format!("rewrite-{query:?}"));
    for i in 0..retries {
        if out.len() >= n {
            break;
        }
        let b = sample(model, query, 1.0, derive_seed(qseed, &format!("pad-{i}")), decode.max_new_tokens)?;
        if !b.is_empty() && !out.contains(&b) {
            out.push(b);
        }
    }
    let complete = out.len() == n;
    Ok((out, complete))
}

pub fn precompute_cache(
    model: &PolicyModel,
    head_queries: &[Text],
    decode: &DecodeConfig,
    n: usize,
    retries: usize,
    seed: u64,
) -> Result<BidwordCache> {
    let mut entries = BTreeMap::new();
    let mut short = BTreeSet::new();
    for q in head_queries {
        let (bs, complete) = generate_bidwords(model, q, decode, n, retries, seed)?;
        if !complete {
            warn!("cache entry for {q:?} has {} of {n} bidwords", bs.len());
            short.insert(q.clone());
        }
        entries.insert(q.clone(), bs);
    }
    Ok(BidwordCache { entries, short, model_id: model.to_checkpoint().sha256(), built_at: seed })
}

impl BidwordCache {
    pub fn get(&self, query: &[TokenId]) -> Option<&Vec<Text>> {
        self.entries.get(query)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Header line, then one `query<TAB>b1<TAB>...` line per entry sorted by
    /// query; short entries carry a trailing `*` on the query field.
    pub fn to_tsv(&self, vocab: &Vocab) -> String {
        let mut s = format!("{CACHE_MAGIC}\tv{CACHE_VERSION}\tmodel={}\tbuilt={}\n", self.model_id, self.built_at);
        for (q, bs) in &self.entries {
            s.push_str(&vocab.decode(q));
            if self.short.contains(q) {
                s.push('*');
            }
            for b in bs {
                s.push('\t');
                s.push_str(&vocab.decode(b));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_tsv(s: &str, vocab: &Vocab) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse { file: "cache".into(), line, msg: msg.into() };
        let mut lines = s.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "empty cache file"))?.split('\t').collect();
        if header.len() != 4 || header[0] != CACHE_MAGIC || header[1] != format!("v{CACHE_VERSION}") {
            return Err(bad(1, "not a version-1 bidword cache"));
        }
        let model_id = header[2].strip_prefix("model=").ok_or_else(|| bad(1, "missing model="))?.to_string();
        let built_at = header[3]
            .strip_prefix("built=")
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| bad(1, "missing built="))?;
        let mut entries = BTreeMap::new();
        let mut short = BTreeSet::new();
        for (i, line) in lines.enumerate() {
            let mut fields = line.split('\t');
            let qf = fields.next().unwrap_or_default();
            let (qtext, is_short) = match qf.strip_suffix('*') {
                Some(q) => (q, true),
                None => (qf, false),
            };
            if qtext.is_empty() {
                return Err(bad(i + 2, "empty query"));
            }
            let q = vocab.encode(qtext);
            if is_short {
                short.insert(q.clone());
            }
            entries.insert(q, fields.map(|b| vocab.encode(b)).collect());
        }
        Ok(Self { entries, short, model_id, built_at })
    }

    pub fn save(&self, path: &Path, vocab: &Vocab) -> Result<()> {
        std::fs::write(path, self.to_tsv(vocab))?;
        Ok(())
    }

    pub fn load(path: &Path, vocab: &Vocab) -> Result<Self> {
        Self::from_tsv(&std::fs::read_to_string(path)?, vocab)
    }
}
