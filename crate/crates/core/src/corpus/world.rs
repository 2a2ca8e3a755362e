use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::vocab::{pseudo_word, Text, TokenId, Vocab, FIRST_WORD};
use crate::util::{derive_seed, fmt_f64, rng, Rng};
use crate::{Error, Result};

pub type NodeId = usize;

/// World shape. `vocab_size` counts the reserved tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub depth: usize,
    pub branching: usize,
    pub synonyms: usize,
    pub products: usize,
    pub bidwords: usize,
    pub vocab_size: usize,
    /// Attributes attached to each category node.
    pub attributes_per_node: usize,
    /// Log-uniform range of per-category base bids.
    pub bid_range: (f64, f64),
    /// Log-uniform range of per-attribute bid multipliers.
    pub attribute_bid_multiplier: (f64, f64),
    /// Log-space standard deviation of product popularity.
    pub popularity_sigma: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            branching: 3,
            synonyms: 3,
            products: 2000,
            bidwords: 1080,
            vocab_size: 512,
            attributes_per_node: 8,
            bid_range: (0.2, 5.0),
            attribute_bid_multiplier: (0.5, 2.0),
            popularity_sigma: 0.25,
        }
    }
}

impl WorldConfig {
    pub fn num_nodes(&self) -> usize {
        (0..=self.depth).map(|d| self.branching.pow(d as u32)).sum()
    }

    pub fn num_leaves(&self) -> usize {
        self.branching.pow(self.depth as u32)
    }

    pub fn validate(&self) -> Result<()> {
        validate(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryNode {
    pub id: NodeId,
    /// First entry is canonical, the rest are synonyms.
    pub surface_forms: Vec<Text>,
    pub parent: Option<NodeId>,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Product {
    pub id: usize,
    pub title: Text,
    pub leaf_category: NodeId,
    pub attributes: Vec<TokenId>,
    pub popularity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bidword {
    pub text: Text,
    pub category: NodeId,
    /// Attribute token, if the bidword is `attribute + surface form`.
    pub attribute: Option<TokenId>,
    pub bid: f64,
    /// Back-filled from the click log; zero until then.
    pub true_cpm: f64,
}

/// The four query → bidword rewrite relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelevanceLabel {
    Synonym,
    HypernymToHyponym,
    HyponymToHypernym,
    Incorrect,
}

impl RelevanceLabel {
    pub const ALL: [RelevanceLabel; 4] = [
        RelevanceLabel::Synonym,
        RelevanceLabel::HypernymToHyponym,
        RelevanceLabel::HyponymToHypernym,
        RelevanceLabel::Incorrect,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RelevanceLabel::Synonym => "synonym",
            RelevanceLabel::HypernymToHyponym => "hypernym_to_hyponym",
            RelevanceLabel::HyponymToHypernym => "hyponym_to_hypernym",
            RelevanceLabel::Incorrect => "incorrect",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == s)
    }

    pub fn is_relevant(self) -> bool {
        self != RelevanceLabel::Incorrect
    }
}

/// The synthetic ground truth.
#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub seed: u64,
    pub vocab: Vocab,
    pub nodes: Vec<CategoryNode>,
    pub node_attributes: Vec<Vec<TokenId>>,
    pub attribute_pool: Vec<TokenId>,
    pub brand_pool: Vec<TokenId>,
    pub noise_pool: Vec<TokenId>,
    pub products: Vec<Product>,
    pub bidwords: Vec<Bidword>,
    surface_index: HashMap<Text, NodeId>,
    max_surface_len: usize,
    bidword_index: HashMap<Text, usize>,
    children: Vec<Vec<NodeId>>,
}

/// Builds a world; deterministic in `(config, seed)`.
pub fn build_world(config: &WorldConfig, seed: u64) -> Result<World> {
    validate(config)?;
    let mut rng = rng(seed);
    let n_nodes = config.num_nodes();
    let n_surfaces = n_nodes * config.synonyms;
    let remaining = config.vocab_size - FIRST_WORD as usize - n_surfaces;
    let n_attrs = (remaining * 2 / 5).max(config.attributes_per_node);
    let n_brands = (remaining / 5).max(1);
    let n_noise = remaining.saturating_sub(n_attrs + n_brands);
    if n_noise == 0 {
        return Err(Error::Config("vocab_size leaves no room for noise tokens".into()));
    }

    let n_words = config.vocab_size - FIRST_WORD as usize;
    let mut order: Vec<usize> = (0..n_words).collect();
    order.shuffle(&mut rng);
    let vocab = Vocab::synthetic(n_words, &order);
    debug_assert!(order.iter().all(|&i| !pseudo_word(i).is_empty()));

    let mut next = FIRST_WORD;
    let mut take = |n: usize| -> Vec<TokenId> {
        let ids = (next..next + n as TokenId).collect();
        next += n as TokenId;
        ids
    };
    let surface_tokens = take(n_surfaces);
    let attribute_pool = take(n_attrs);
    let brand_pool = take(n_brands);
    let noise_pool = take(n_noise);

    // Breadth-first numbering: node 0 is the root.
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut children = vec![Vec::new(); n_nodes];
    nodes.push(CategoryNode { id: 0, surface_forms: Vec::new(), parent: None, depth: 0 });
    let mut frontier = vec![0usize];
    for depth in 1..=config.depth {
        let mut next_frontier = Vec::new();
        for &p in &frontier {
            for _ in 0..config.branching {
                let id = nodes.len();
                nodes.push(CategoryNode { id, surface_forms: Vec::new(), parent: Some(p), depth });
                children[p].push(id);
                next_frontier.push(id);
            }
        }
        frontier = next_frontier;
    }
    for node in &mut nodes {
        let base = node.id * config.synonyms;
        node.surface_forms = (0..config.synonyms).map(|s| vec![surface_tokens[base + s]]).collect();
    }

    // Leaves draw attributes from the shared pool; internal nodes draw from
    // the union of their children, so every attribute on a node co-occurs
    // with at least one product category beneath it.
    let mut node_attributes = vec![Vec::new(); n_nodes];
    for id in (0..n_nodes).rev() {
        let pool: Vec<TokenId> = if children[id].is_empty() {
            attribute_pool.clone()
        } else {
            let mut u: Vec<TokenId> = children[id].iter().flat_map(|&c| node_attributes[c].clone()).collect();
            u.sort_unstable();
            u.dedup();
            u
        };
        let mut chosen: Vec<TokenId> = pool
            .choose_multiple(&mut rng, config.attributes_per_node.min(pool.len()))
            .copied()
            .collect();
        chosen.sort_unstable();
        node_attributes[id] = chosen;
    }

    let leaves: Vec<NodeId> = (0..n_nodes).filter(|&i| children[i].is_empty()).collect();

    // Bids: log-uniform category base times log-uniform attribute multiplier.
    let log_uniform = |rng: &mut Rng, (lo, hi): (f64, f64)| (rng.random_range(lo.ln()..=hi.ln())).exp();
    let category_bid: Vec<f64> = (0..n_nodes).map(|_| log_uniform(&mut rng, config.bid_range)).collect();
    let attribute_multiplier: HashMap<TokenId, f64> = attribute_pool
        .iter()
        .map(|&a| (a, log_uniform(&mut rng, config.attribute_bid_multiplier)))
        .collect();

    // Inventory: one canonical bidword per leaf, then other plain surface
    // forms, then attribute + surface combinations.
    let mut inventory: Vec<(NodeId, Option<TokenId>, Text)> = leaves
        .iter()
        .map(|&l| (l, None, nodes[l].surface_forms[0].clone()))
        .collect();
    let mut plain = Vec::new();
    let mut combos = Vec::new();
    for node in &nodes {
        for (s, form) in node.surface_forms.iter().enumerate() {
            if !(s == 0 && children[node.id].is_empty()) {
                plain.push((node.id, None, form.clone()));
            }
            for &a in &node_attributes[node.id] {
                let mut text = vec![a];
                text.extend_from_slice(form);
                combos.push((node.id, Some(a), text));
            }
        }
    }
    plain.shuffle(&mut rng);
    combos.shuffle(&mut rng);
    let available = inventory.len() + plain.len() + combos.len();
    if config.bidwords > available {
        return Err(Error::Config(format!(
            "bidwords = {} exceeds the {available} distinct texts this world can form",
            config.bidwords
        )));
    }
    inventory.extend(plain.into_iter().chain(combos));
    inventory.truncate(config.bidwords);
    let bidwords: Vec<Bidword> = inventory
        .into_iter()
        .map(|(category, attribute, text)| {
            let mult = attribute.map_or(1.0, |a| attribute_multiplier[&a]);
            Bidword { text, category, attribute, bid: category_bid[category] * mult, true_cpm: 0.0 }
        })
        .collect();

    // Products: every leaf gets at least one.
    let mut prng = crate::util::rng(derive_seed(seed, "products"));
    let popularity = LogNormal::new(0.0, config.popularity_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut products = Vec::with_capacity(config.products);
    for id in 0..config.products {
        let leaf = if id < leaves.len() { leaves[id] } else { leaves[prng.random_range(0..leaves.len())] };
        let attrs = &node_attributes[leaf];
        let n_attr = prng.random_range(1..=2usize).min(attrs.len());
        let mut attributes: Vec<TokenId> = attrs.choose_multiple(&mut prng, n_attr).copied().collect();
        attributes.sort_unstable();
        let mut title = vec![brand_pool[prng.random_range(0..brand_pool.len())]];
        title.extend(&attributes);
        let forms = &nodes[leaf].surface_forms;
        title.extend(&forms[prng.random_range(0..forms.len())]);
        if let Some(parent) = nodes[leaf].parent {
            if prng.random_bool(0.5) {
                title.extend(&nodes[parent].surface_forms[0]);
            }
        }
        products.push(Product {
            id,
            title,
            leaf_category: leaf,
            attributes,
            popularity: popularity.sample(&mut prng),
        });
    }

    let mut world = World {
        config: config.clone(),
        seed,
        vocab,
        nodes,
        node_attributes,
        attribute_pool,
        brand_pool,
        noise_pool,
        products,
        bidwords,
        surface_index: HashMap::new(),
        max_surface_len: 1,
        bidword_index: HashMap::new(),
        children,
    };
    world.rebuild_indexes();
    Ok(world)
}

fn validate(c: &WorldConfig) -> Result<()> {
    if c.depth < 2 || c.branching < 2 || c.synonyms < 1 {
        return Err(Error::Config("need depth ≥ 2, branching ≥ 2, synonyms ≥ 1".into()));
    }
    if c.attributes_per_node < 1 {
        return Err(Error::Config("attributes_per_node must be ≥ 1".into()));
    }
    if c.bidwords < c.num_leaves() {
        return Err(Error::Config(format!(
            "bidwords = {} is fewer than the {} leaf categories",
            c.bidwords,
            c.num_leaves()
        )));
    }
    if c.products < c.num_leaves() {
        return Err(Error::Config("products must cover every leaf".into()));
    }
    let needed = FIRST_WORD as usize + c.num_nodes() * c.synonyms + c.attributes_per_node + 2;
    if c.vocab_size < needed {
        return Err(Error::Config(format!(
            "vocab_size = {} too small; distinct surface forms alone need {needed}",
            c.vocab_size
        )));
    }
    let (lo, hi) = c.bid_range;
    let (mlo, mhi) = c.attribute_bid_multiplier;
    if !(lo > 0.0 && hi >= lo && mlo > 0.0 && mhi >= mlo) {
        return Err(Error::Config("bid ranges must be positive and ordered".into()));
    }
    if !(c.popularity_sigma.is_finite() && c.popularity_sigma >= 0.0) {
        return Err(Error::Config("popularity_sigma must be finite and ≥ 0".into()));
    }
    Ok(())
}

impl World {
    fn rebuild_indexes(&mut self) {
        self.surface_index.clear();
        for node in &self.nodes {
            for form in &node.surface_forms {
                self.max_surface_len = self.max_surface_len.max(form.len());
                self.surface_index.insert(form.clone(), node.id);
            }
        }
        self.bidword_index = self.bidwords.iter().enumerate().map(|(i, b)| (b.text.clone(), i)).collect();
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn children(&self, node: NodeId) -> &[NodeId] {
        &self.children[node]
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        self.children[node].is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&n| self.is_leaf(n))
    }

    /// Whether `a` is a proper ancestor of `b`.
    pub fn is_ancestor(&self, a: NodeId, b: NodeId) -> bool {
        let mut cur = self.nodes[b].parent;
        while let Some(p) = cur {
            if p == a {
                return true;
            }
            cur = self.nodes[p].parent;
        }
        false
    }

    pub fn in_subtree(&self, root: NodeId, node: NodeId) -> bool {
        root == node || self.is_ancestor(root, node)
    }

    /// The category a text refers to: the deepest surface-form match,
    /// provided all matches lie on one root-to-leaf path.
    pub fn node_of(&self, text: &[TokenId]) -> Option<NodeId> {
        let mut found: Option<NodeId> = None;
        for len in 1..=self.max_surface_len.min(text.len()) {
            for window in text.windows(len) {
                if let Some(&n) = self.surface_index.get(window) {
                    found = match found {
                        None => Some(n),
                        Some(f) if f == n || self.is_ancestor(n, f) => Some(f),
                        Some(f) if self.is_ancestor(f, n) => Some(n),
                        Some(_) => return None,
                    };
                }
            }
        }
        found
    }

    pub fn relation(&self, query_node: NodeId, bidword_node: NodeId) -> RelevanceLabel {
        if query_node == bidword_node {
            RelevanceLabel::Synonym
        } else if self.is_ancestor(query_node, bidword_node) {
            RelevanceLabel::HypernymToHyponym
        } else if self.is_ancestor(bidword_node, query_node) {
            RelevanceLabel::HyponymToHypernym
        } else {
            RelevanceLabel::Incorrect
        }
    }

    /// Ground-truth rewrite relation between two texts.
    pub fn relevance(&self, query: &[TokenId], bidword: &[TokenId]) -> RelevanceLabel {
        match (self.node_of(query), self.node_of(bidword)) {
            (Some(q), Some(b)) => self.relation(q, b),
            _ => RelevanceLabel::Incorrect,
        }
    }

    pub fn bidword(&self, text: &[TokenId]) -> Option<&Bidword> {
        self.bidword_index.get(text).map(|&i| &self.bidwords[i])
    }

    pub fn bidword_id(&self, text: &[TokenId]) -> Option<usize> {
        self.bidword_index.get(text).copied()
    }

    pub fn attribute_of_node(&self, node: NodeId, token: TokenId) -> bool {
        self.node_attributes[node].binary_search(&token).is_ok()
    }

    /// Products an inventory bidword retrieves: every product under its
    /// category carrying its attribute (if any), ascending by id.
    pub fn postings(&self, bidword: &Bidword) -> Vec<usize> {
        self.products
            .iter()
            .filter(|p| self.in_subtree(bidword.category, p.leaf_category))
            .filter(|p| bidword.attribute.is_none_or(|a| p.attributes.contains(&a)))
            .map(|p| p.id)
            .collect()
    }

    /// Canonical serialization; equal bytes ⇔ equal worlds.
    pub fn to_tsv(&self) -> String {
        let v = &self.vocab;
        let mut out = String::new();
        out.push_str("#categories\n");
        for n in &self.nodes {
            let forms: Vec<String> = n.surface_forms.iter().map(|f| v.decode(f)).collect();
            let attrs = v.decode(&self.node_attributes[n.id]);
            let parent = n.parent.map_or("-".to_string(), |p| p.to_string());
            out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", n.id, parent, n.depth, forms.join("|"), attrs));
        }
        out.push_str("#products\n");
        for p in &self.products {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                p.id,
                v.decode(&p.title),
                p.leaf_category,
                v.decode(&p.attributes),
                fmt_f64(p.popularity)
            ));
        }
        out.push_str("#bidwords\n");
        for b in &self.bidwords {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                v.decode(&b.text),
                b.category,
                fmt_f64(b.bid),
                fmt_f64(b.true_cpm)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> WorldConfig {
        WorldConfig {
            depth: 2,
            branching: 2,
            synonyms: 1,
            products: 8,
            bidwords: 4,
            vocab_size: 64,
            attributes_per_node: 2,
            ..Default::default()
        }
    }

    #[test]
    fn tiny_world_shape_and_determinism() {
        let a = build_world(&tiny(), 7).unwrap();
        let b = build_world(&tiny(), 7).unwrap();
        assert_eq!(a.nodes.len(), 7);
        assert_eq!(a.bidwords.len(), 4);
        assert_eq!(a.to_tsv(), b.to_tsv());
    }

    #[test]
    fn seed_changes_titles() {
        let a = build_world(&tiny(), 7).unwrap();
        let b = build_world(&tiny(), 8).unwrap();
        assert!(a.products.iter().zip(&b.products).any(|(x, y)| a.vocab.decode(&x.title) != b.vocab.decode(&y.title)));
    }

    #[test]
    fn node_count_is_geometric() {
        let cfg = WorldConfig { depth: 3, branching: 3, synonyms: 1, bidwords: 27, products: 27, ..Default::default() };
        assert_eq!(build_world(&cfg, 1).unwrap().nodes.len(), 40);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(build_world(&WorldConfig { bidwords: 3, ..tiny() }, 0).is_err());
        assert!(build_world(&WorldConfig { vocab_size: 12, ..tiny() }, 0).is_err());
        assert!(build_world(&WorldConfig { depth: 1, ..tiny() }, 0).is_err());
    }

    #[test]
    fn default_world_invariants() {
        let w = build_world(&WorldConfig::default(), 3).unwrap();
        assert_eq!(w.nodes.iter().filter(|n| n.parent.is_none()).count(), 1);
        let mut forms = std::collections::HashSet::new();
        for n in &w.nodes {
            assert!(!n.surface_forms.is_empty());
            for f in &n.surface_forms {
                assert!(forms.insert(f.clone()), "surface form shared across nodes");
            }
            if let Some(p) = n.parent {
                assert!(p < n.id);
                assert_eq!(w.nodes[p].depth + 1, n.depth);
            }
        }
        for leaf in w.leaves() {
            assert!(w.products.iter().any(|p| p.leaf_category == leaf));
            assert!(w.bidwords.iter().any(|b| b.category == leaf));
        }
        for p in &w.products {
            assert!(p.popularity > 0.0);
            assert_eq!(w.node_of(&p.title), Some(p.leaf_category));
        }
        let texts: std::collections::HashSet<_> = w.bidwords.iter().map(|b| b.text.clone()).collect();
        assert_eq!(texts.len(), w.bidwords.len());
        assert!(w.bidwords.iter().all(|b| b.bid > 0.0));
    }
}
