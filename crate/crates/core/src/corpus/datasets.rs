use std::collections::{BTreeMap, HashMap};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::clicks::{cpm, ClickLog};
use super::queries::Tier;
use super::vocab::{Text, TokenId};
use super::world::{NodeId, RelevanceLabel, World};
use crate::util::{rng, Rng};
use crate::{Error, Result};

/// Aggregated search frequency per query text.
pub fn search_frequencies(logs: &ClickLog) -> HashMap<Text, u64> {
    let mut f = HashMap::new();
    for q in &logs.queries {
        *f.entry(q.text.clone()).or_insert(0) += q.frequency;
    }
    f
}

/// 1 iff `text` is an inventory bidword searched strictly more than `threshold` times.
pub fn authenticity_label(world: &World, freqs: &HashMap<Text, u64>, text: &[TokenId], threshold: u64) -> u8 {
    let searched = freqs.get(text).copied().unwrap_or(0);
    u8::from(world.bidword(text).is_some() && searched > threshold)
}

/// Relevance reward of a ground-truth label rescaled to `[0, 1]`:
/// `(Pr_syn + Pr_hyper − Pr_error + 1) / 2` on the one-hot label.
pub fn sft_relevance_score(label: RelevanceLabel) -> f64 {
    match label {
        RelevanceLabel::Synonym | RelevanceLabel::HypernymToHyponym => 1.0,
        RelevanceLabel::HyponymToHypernym => 0.5,
        RelevanceLabel::Incorrect => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SftThresholds {
    pub min_relevance: f64,
    pub min_authenticity: f64,
    pub min_cpm: f64,
}

impl Default for SftThresholds {
    fn default() -> Self {
        Self { min_relevance: 0.0, min_authenticity: 0.5, min_cpm: 0.0 }
    }
}

/// Per-tier repetition factors; fractional parts are kept with that probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TierMultipliers {
    pub head: f64,
    pub middle: f64,
    pub tail: f64,
}

impl Default for TierMultipliers {
    fn default() -> Self {
        Self { head: 0.5, middle: 1.0, tail: 2.0 }
    }
}

impl TierMultipliers {
    pub const NEUTRAL: TierMultipliers = TierMultipliers { head: 1.0, middle: 1.0, tail: 1.0 };

    fn of(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Head => self.head,
            Tier::Middle => self.middle,
            Tier::Tail => self.tail,
        }
    }

    fn repeats(&self, tier: Tier, rng: &mut Rng) -> usize {
        let m = self.of(tier).max(0.0);
        let whole = m.floor();
        whole as usize + usize::from(rng.random_bool(m - whole))
    }
}

fn compose(world: &World, node: NodeId, rng: &mut Rng, attrs: usize, foreign_ok: bool) -> Text {
    let form = world.nodes[node].surface_forms.choose(rng).expect("surface forms");
    let pool: &[TokenId] = if foreign_ok && rng.random_bool(0.3) {
        &world.attribute_pool
    } else {
        &world.node_attributes[node]
    };
    let mut text: Text = pool.choose_multiple(rng, attrs.min(pool.len())).copied().collect();
    text.extend_from_slice(form);
    text
}

/// Unmappable text naming two unrelated categories at once, padded with
/// repeats of its own tokens to a random length.
fn conflated(world: &World, a: NodeId, b: NodeId, rng: &mut crate::util::Rng) -> Text {
    let mut text = world.nodes[a].surface_forms.choose(rng).unwrap().clone();
    text.extend(world.nodes[b].surface_forms.choose(rng).unwrap());
    let len = rng.random_range(text.len()..=12.max(text.len()));
    while text.len() < len {
        let t = text[rng.random_range(0..text.len())];
        text.push(t);
    }
    text
}

/// Samples `(query, bidword, label)` triples stratified to a quarter per
/// label, labels assigned by the category tree.
pub fn derive_relevance_dataset(world: &World, n_pairs: usize, seed: u64) -> Result<Vec<(Text, Text, RelevanceLabel)>> {
    if n_pairs == 0 {
        return Err(Error::Precondition("n_pairs must be ≥ 1".into()));
    }
    let n = world.nodes.len();
    let non_root: Vec<NodeId> = (0..n).filter(|&i| world.nodes[i].parent.is_some()).collect();
    let incorrect_exists = (0..n).any(|a| (0..n).any(|b| world.relation(a, b) == RelevanceLabel::Incorrect));
    if non_root.is_empty() || !incorrect_exists {
        return Err(Error::Precondition("world too shallow to stratify relevance labels".into()));
    }
    let ancestors = |node: NodeId| {
        let mut out = Vec::new();
        let mut cur = world.nodes[node].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = world.nodes[p].parent;
        }
        out
    };
    let by_node: Vec<Vec<&Text>> = (0..n)
        .map(|i| world.bidwords.iter().filter(|b| b.category == i).map(|b| &b.text).collect())
        .collect();

    let mut rng = rng(seed);
    let mut out = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let label = RelevanceLabel::ALL[i % 4];
        let (qn, bn) = match label {
            RelevanceLabel::Synonym => {
                let a = rng.random_range(0..n);
                (a, a)
            }
            RelevanceLabel::HypernymToHyponym => {
                let b = *non_root.choose(&mut rng).unwrap();
                (*ancestors(b).choose(&mut rng).unwrap(), b)
            }
            RelevanceLabel::HyponymToHypernym => {
                let q = *non_root.choose(&mut rng).unwrap();
                (q, *ancestors(q).choose(&mut rng).unwrap())
            }
            RelevanceLabel::Incorrect => loop {
                let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
                if world.relation(a, b) == RelevanceLabel::Incorrect {
                    break (a, b);
                }
            },
        };
        let q_attrs = rng.random_range(0..=2);
        let query = compose(world, qn, &mut rng, q_attrs, true);
        let u: f64 = rng.random();
        let bidword = if label == RelevanceLabel::Incorrect && u < 0.1 {
            // Unmappable text: noise only.
            vec![*world.noise_pool.choose(&mut rng).unwrap(), *world.noise_pool.choose(&mut rng).unwrap()]
        } else if label == RelevanceLabel::Incorrect && u < 0.5 {
            conflated(world, qn, bn, &mut rng)
        } else if !by_node[bn].is_empty() && rng.random_bool(0.6) {
            (*by_node[bn].choose(&mut rng).unwrap()).clone()
        } else {
            let b_attrs = rng.random_range(0..=1);
            compose(world, bn, &mut rng, b_attrs, true)
        };
        debug_assert_eq!(world.relevance(&query, &bidword), label);
        out.push((query, bidword, label));
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Every searched text plus every inventory bidword, labelled by
/// [`authenticity_label`], sorted by text.
pub fn derive_authenticity_dataset(world: &World, logs: &ClickLog, freq_threshold: u64) -> Result<Vec<(Text, u8)>> {
    if freq_threshold < 1 {
        return Err(Error::Precondition("freq_threshold must be ≥ 1".into()));
    }
    let freqs = search_frequencies(logs);
    let mut texts: Vec<Text> = freqs.keys().cloned().collect();
    texts.extend(world.bidwords.iter().map(|b| b.text.clone()));
    texts.sort();
    texts.dedup();
    Ok(texts
        .into_iter()
        .map(|t| {
            let label = authenticity_label(world, &freqs, &t, freq_threshold);
            (t, label)
        })
        .collect())
}

/// Down-samples the majority class so both labels are equally frequent.
pub fn balance_binary(dataset: &[(Text, u8)], seed: u64) -> Vec<(Text, u8)> {
    let mut rng = rng(seed);
    let (mut pos, mut neg): (Vec<_>, Vec<_>) = dataset.iter().cloned().partition(|(_, y)| *y == 1);
    let n = pos.len().min(neg.len());
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut out: Vec<_> = pos.into_iter().take(n).chain(neg.into_iter().take(n)).collect();
    out.shuffle(&mut rng);
    out
}

/// Repeats the minority class cyclically until both labels are equally
/// frequent; every original row is kept.
pub fn oversample_binary(dataset: &[(Text, u8)], seed: u64) -> Vec<(Text, u8)> {
    let mut rng = rng(seed);
    let (mut pos, mut neg): (Vec<_>, Vec<_>) = dataset.iter().cloned().partition(|(_, y)| *y == 1);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let (major, minor) = if pos.len() >= neg.len() { (pos, neg) } else { (neg, pos) };
    let mut out = major.clone();
    if !minor.is_empty() {
        out.extend(minor.iter().cycle().take(major.len()).cloned());
    }
    out.shuffle(&mut rng);
    out
}

/// Per-bidword CPM over the log, sorted by text.
pub fn derive_cpm_dataset(logs: &ClickLog) -> Result<Vec<(Text, f64)>> {
    if logs.records.is_empty() {
        return Err(Error::EmptyDataset("click log has no records".into()));
    }
    let mut rows: Vec<(Text, f64)> = logs
        .bidword_totals()
        .into_iter()
        .map(|(text, (imp, rev))| (text.to_vec(), cpm(rev, imp)))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(rows)
}

fn tiers(logs: &ClickLog) -> HashMap<&[TokenId], Tier> {
    logs.queries.iter().map(|q| (q.text.as_slice(), q.tier)).collect()
}

fn resample(pairs: BTreeMap<(Text, Text), Tier>, multipliers: &TierMultipliers, seed: u64, what: &str) -> Result<Vec<(Text, Text)>> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for ((a, b), tier) in pairs {
        for _ in 0..multipliers.repeats(tier, &mut rng) {
            out.push((a.clone(), b.clone()));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset(format!("{what} pairs: nothing survived filtering")));
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Clicked (query, bidword) pairs passing all three ground-truth filters,
/// resampled by tier.
pub fn derive_sft_pairs(
    world: &World,
    logs: &ClickLog,
    thresholds: &SftThresholds,
    auth_freq_threshold: u64,
    multipliers: &TierMultipliers,
    seed: u64,
) -> Result<Vec<(Text, Text)>> {
    let freqs = search_frequencies(logs);
    let tiers = tiers(logs);
    let mut clicks: BTreeMap<(Text, Text), u64> = BTreeMap::new();
    for r in &logs.records {
        *clicks.entry((r.query.clone(), r.bidword.clone())).or_insert(0) += r.clicks;
    }
    let kept: BTreeMap<(Text, Text), Tier> = clicks
        .into_iter()
        .filter(|(_, c)| *c >= 1)
        .filter(|((q, b), _)| {
            let rel = sft_relevance_score(world.relevance(q, b));
            let au = authenticity_label(world, &freqs, b, auth_freq_threshold) as f64;
            let value = world.bidword(b).map_or(0.0, |bw| bw.true_cpm);
            rel >= thresholds.min_relevance && au >= thresholds.min_authenticity && value >= thresholds.min_cpm
        })
        .map(|(k, _)| {
            let tier = tiers.get(k.0.as_slice()).copied().unwrap_or(Tier::Tail);
            (k, tier)
        })
        .collect();
    resample(kept, multipliers, seed, "sft")
}

/// (query, clicked product title) pairs with at least `min_clicks` clicks,
/// resampled by tier.
pub fn derive_ppt_pairs(
    world: &World,
    logs: &ClickLog,
    min_clicks: u64,
    multipliers: &TierMultipliers,
    seed: u64,
) -> Result<Vec<(Text, Text)>> {
    let tiers = tiers(logs);
    let mut clicks: BTreeMap<(Text, usize), u64> = BTreeMap::new();
    for r in &logs.records {
        *clicks.entry((r.query.clone(), r.product)).or_insert(0) += r.clicks;
    }
    let kept: BTreeMap<(Text, Text), Tier> = clicks
        .into_iter()
        .filter(|(_, c)| *c >= min_clicks.max(1))
        .map(|((q, p), _)| {
            let tier = tiers.get(q.as_slice()).copied().unwrap_or(Tier::Tail);
            ((q, world.products[p].title.clone()), tier)
        })
        .collect();
    resample(kept, multipliers, seed, "ppt")
}
