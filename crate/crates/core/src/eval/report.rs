use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::path::Path;

use super::metrics::{ndcg_at_k, quality_rates, recall_at_k};
use crate::corpus::{GoldenSet, Text, World};
use crate::policy::{beam_search, trie_constrained_beam_search, DecodeConfig, PolicyModel, Trie};
use crate::util::fmt_f64;
use crate::Result;

pub const CUTOFFS: [usize; 3] = [3, 5, 10];

/// One evaluated model: ranking metrics against the golden set, oracle
/// quality rates of everything it generated and optional traffic metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub model_id: String,
    pub recall: [f64; 3],
    pub ndcg: [f64; 3],
    pub relevance_rate: f64,
    pub authenticity_rate: f64,
    /// Mean oracle CPM of generated bidwords (0 for text outside the inventory).
    pub mean_value: f64,
    pub cpc: Option<f64>,
    pub cpm: Option<f64>,
    pub fingerprint: String,
    pub seed: u64,
}

impl MetricsReport {
    pub const HEADER: &'static str = "model,seed,fingerprint,recall@3,recall@5,recall@10,ndcg@3,ndcg@5,ndcg@10,relevance_rate,authenticity_rate,mean_value,cpc,cpm";

    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        let mut cols = vec![self.model_id.clone(), self.seed.to_string(), self.fingerprint.clone()];
        cols.extend(self.recall.iter().chain(&self.ndcg).map(|&x| fmt_f64(x)));
        cols.extend([self.relevance_rate, self.authenticity_rate, self.mean_value].map(fmt_f64));
        cols.push(opt(self.cpc));
        cols.push(opt(self.cpm));
        cols.join(",")
    }

    /// `(metric name, value)` in CSV column order, optional columns skipped.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![
            ("recall@3", self.recall[0]),
            ("recall@5", self.recall[1]),
            ("recall@10", self.recall[2]),
            ("ndcg@3", self.ndcg[0]),
            ("ndcg@5", self.ndcg[1]),
            ("ndcg@10", self.ndcg[2]),
            ("relevance_rate", self.relevance_rate),
            ("authenticity_rate", self.authenticity_rate),
            ("mean_value", self.mean_value),
        ];
        out.extend(self.cpc.map(|x| ("cpc", x)));
        out.extend(self.cpm.map(|x| ("cpm", x)));
        out
    }
}

/// Appends rows, writing the header only when the file is new or empty.
pub fn append_csv(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{}", MetricsReport::HEADER)?;
    }
    for r in reports {
        writeln!(f, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Top-ranked bidwords for each query; with a trie every output is an
/// inventory member.
pub fn generate_all(
    model: &PolicyModel,
    queries: &[Text],
    decode: &DecodeConfig,
    trie: Option<&Trie>,
) -> Result<BTreeMap<Text, Vec<Text>>> {
    queries
        .iter()
        .map(|q| {
            let ranked = match trie {
                Some(t) => trie_constrained_beam_search(model, q, t, decode)?,
                None => beam_search(model, q, decode)?,
            };
            let out = ranked.into_iter().map(|(b, _)| b).filter(|b| !b.is_empty()).collect();
            Ok((q.clone(), out))
        })
        .collect()
}

/// Scores generated lists against the golden set (mean over queries that
/// have a golden entry) and the corpus oracles.
pub fn score_generated(
    model_id: &str,
    generated: &BTreeMap<Text, Vec<Text>>,
    golden: &GoldenSet,
    world: &World,
    freqs: &HashMap<Text, u64>,
    auth_threshold: u64,
    seed: u64,
    fingerprint: &str,
) -> Result<MetricsReport> {
    let (mut recall, mut ndcg, mut n) = ([0.0; 3], [0.0; 3], 0usize);
    for (q, out) in generated {
        let Some(gold) = golden.get(q) else { continue };
        for (i, &k) in CUTOFFS.iter().enumerate() {
            recall[i] += recall_at_k(out, gold, k)?;
            ndcg[i] += ndcg_at_k(out, gold, k)?;
        }
        n += 1;
    }
    let denom = n.max(1) as f64;
    let q = quality_rates(world, freqs, auth_threshold, generated);
    Ok(MetricsReport {
        model_id: model_id.to_string(),
        recall: recall.map(|x| x / denom),
        ndcg: ndcg.map(|x| x / denom),
        relevance_rate: q.relevance_rate,
        authenticity_rate: q.authenticity_rate,
        mean_value: q.mean_value,
        cpc: None,
        cpm: None,
        fingerprint: fingerprint.to_string(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(id: &str) -> MetricsReport {
        MetricsReport {
            model_id: id.into(),
            recall: [0.1, 0.2, 0.3],
            ndcg: [0.4, 0.5, 0.6],
            relevance_rate: 0.9,
            authenticity_rate: 0.8,
            mean_value: 12.5,
            cpc: None,
            cpm: Some(3.0),
            fingerprint: "abc".into(),
            seed: 7,
        }
    }

    #[test]
    fn csv_is_append_only_with_one_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        append_csv(&p, &[report("a")]).unwrap();
        append_csv(&p, &[report("b")]).unwrap();
        let s = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], MetricsReport::HEADER);
        assert!(lines[1].starts_with("a,7,abc,0.100000000"));
        assert!(lines[2].ends_with(",,3.000000000"));
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
    }
}
