use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng as _;

use super::rewards::{margin_rewards, relevance_reward};
use crate::corpus::io::read_rows;
use crate::corpus::{Text, TokenId, Vocab};
use crate::discriminators::Discriminators;
use crate::policy::{beam_search, sample, DecodeConfig, PolicyModel};
use crate::util::{derive_seed, fmt_f64, rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceTriple {
    pub query: Text,
    pub winner: Text,
    pub loser: Text,
    pub delta_au: f64,
    pub delta_val: f64,
}

/// Beam top-`n_beam` ∪ `n_samples` temperature-1 samples, deduplicated and
/// sorted. Empty samples (immediate EOS) are dropped.
pub fn candidate_pool(
    model: &PolicyModel,
    query: &[TokenId],
    decode: &DecodeConfig,
    n_beam: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Text>> {
    let cfg = DecodeConfig { beam_width: n_beam.max(1), constrained: false, ..*decode };
    let mut pool: BTreeSet<Text> = beam_search(model, query, &cfg)?.into_iter().map(|(b, _)| b).collect();
    for i in 0..n_samples {
        pool.insert(sample(model, query, 1.0, derive_seed(seed, &format!("sample-{i}")), decode.max_new_tokens)?);
    }
    pool.remove(&Vec::new());
    Ok(pool.into_iter().collect())
}

/// Sorts `(candidate, reward)` by reward (descending, ties by token order)
/// and pairs them outside-in: (1st, last), (2nd, second-last), ... An odd
/// middle element has no partner. Pairs below `min_gap` are dropped.
pub fn pair_outside_in(mut scored: Vec<(Text, f64)>, min_gap: f64) -> Vec<(Text, Text)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.dedup_by(|a, b| a.0 == b.0);
    let n = scored.len();
    (0..n / 2)
        .filter_map(|i| {
            let (w, rw) = &scored[i];
            let (l, rl) = &scored[n - 1 - i];
            (rw - rl >= min_gap && rw > rl).then(|| (w.clone(), l.clone()))
        })
        .collect()
}

/// Scores candidates with the relevance reward, pairs them outside-in and
/// attaches authenticity and value margins.
pub fn build_preference_pairs(
    query: &[TokenId],
    candidates: &[Text],
    discs: &Discriminators,
    min_gap: f64,
) -> Vec<PreferenceTriple> {
    let unique: BTreeSet<&Text> = candidates.iter().collect();
    let scored = unique
        .into_iter()
        .map(|b| (b.clone(), relevance_reward(&discs.relevance, query, b)))
        .collect();
    pair_outside_in(scored, min_gap)
        .into_iter()
        .map(|(winner, loser)| {
            let (delta_au, delta_val) = margin_rewards(discs, &winner, &loser);
            PreferenceTriple { query: query.to_vec(), winner, loser, delta_au, delta_val }
        })
        .collect()
}

/// Same pairs with winner and loser swapped by a fair coin: the relevance
/// signal is removed but the pair set and margin definitions are kept.
pub fn randomize_orientation(pairs: &[PreferenceTriple], seed: u64) -> Vec<PreferenceTriple> {
    let mut r = rng(seed);
    pairs
        .iter()
        .map(|p| {
            if r.random_bool(0.5) {
                PreferenceTriple {
                    query: p.query.clone(),
                    winner: p.loser.clone(),
                    loser: p.winner.clone(),
                    delta_au: -p.delta_au,
                    delta_val: -p.delta_val,
                }
            } else {
                p.clone()
            }
        })
        .collect()
}

/// Recomputes margins for existing pairs, e.g. after swapping discriminators.
pub fn refresh_margins(pairs: &mut [PreferenceTriple], discs: &Discriminators) {
    for p in pairs {
        (p.delta_au, p.delta_val) = margin_rewards(discs, &p.winner, &p.loser);
    }
}

pub fn write_preferences(path: &Path, vocab: &Vocab, rows: &[PreferenceTriple]) -> Result<()> {
    let mut s = String::new();
    for p in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            vocab.decode(&p.query),
            vocab.decode(&p.winner),
            vocab.decode(&p.loser),
            fmt_f64(p.delta_au),
            fmt_f64(p.delta_val)
        ));
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_preferences(path: &Path, vocab: &Vocab) -> Result<Vec<PreferenceTriple>> {
    read_rows(path, 5)?
        .into_iter()
        .map(|(line, f)| {
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    file: path.display().to_string(),
                    line,
                    msg: format!("`{s}` is not a number"),
                })
            };
            Ok(PreferenceTriple {
                query: vocab.encode(&f[0]),
                winner: vocab.encode(&f[1]),
                loser: vocab.encode(&f[2]),
                delta_au: num(&f[3])?,
                delta_val: num(&f[4])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discriminators::DiscriminatorConfig;
    use crate::discriminators::{AuthenticityModel, RelevanceModel, ValueModel};
    use crate::nn::Parameters;
    use proptest::prelude::*;

    #[test]
    fn odd_count_leaves_the_middle_unpaired() {
        let scored = vec![(vec![5], 0.5), (vec![4], 0.9), (vec![6], -0.2)];
        assert_eq!(pair_outside_in(scored, 0.1), vec![(vec![4], vec![6])]);
    }

    #[test]
    fn gap_filter_and_ties() {
        let scored = vec![(vec![4], 0.3), (vec![5], 0.25), (vec![6], 0.3), (vec![7], 0.0)];
        // Sorted: [4]@0.3, [6]@0.3, [5]@0.25, [7]@0.0
        assert_eq!(pair_outside_in(scored.clone(), 0.1), vec![(vec![4], vec![7])]);
        assert_eq!(pair_outside_in(scored, 0.0).len(), 2);
        assert!(pair_outside_in(vec![(vec![4], 0.1), (vec![5], 0.1)], 0.0).is_empty());
    }

    fn discs() -> Discriminators {
        let cfg = DiscriminatorConfig { embed_dim: 4, hidden_dim: 6, ..Default::default() };
        let mut d = Discriminators {
            relevance: RelevanceModel::new(20, &cfg, 1),
            authenticity: AuthenticityModel::new(20, &cfg, 2),
            value: ValueModel::new(20, &cfg, 3),
        };
        // Fresh heads are zero; spread them so rewards differ between candidates.
        let mut r = rng(4);
        for p in d.relevance.params_mut().into_iter().chain(d.authenticity.params_mut()).chain(d.value.params_mut()) {
            for v in &mut p.values {
                *v += r.random_range(-1.0..1.0);
            }
        }
        d
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn winners_score_strictly_higher(
            cands in proptest::collection::vec(proptest::collection::vec(4u32..20, 1..4), 0..12),
            q in proptest::collection::vec(4u32..20, 1..4),
            gap in 0.0f64..0.05,
        ) {
            let d = discs();
            for t in build_preference_pairs(&q, &cands, &d, gap) {
                let rw = relevance_reward(&d.relevance, &q, &t.winner);
                let rl = relevance_reward(&d.relevance, &q, &t.loser);
                prop_assert!(rw > rl && rw - rl >= gap);
                let (a, v) = margin_rewards(&d, &t.winner, &t.loser);
                prop_assert_eq!((a, v), (t.delta_au, t.delta_val));
            }
        }
    }

    #[test]
    fn orientation_flip_keeps_the_pair_set() {
        let pairs: Vec<PreferenceTriple> = (0..40u32)
            .map(|i| PreferenceTriple { query: vec![4], winner: vec![5 + i], loser: vec![100 + i], delta_au: 0.2, delta_val: -0.1 })
            .collect();
        let flipped = randomize_orientation(&pairs, 9);
        let mut swapped = 0;
        for (a, b) in pairs.iter().zip(&flipped) {
            if a.winner == b.loser {
                swapped += 1;
                assert_eq!((b.delta_au, b.delta_val), (-0.2, 0.1));
            } else {
                assert_eq!(a, b);
            }
        }
        assert!(swapped > 5 && swapped < 35);
        assert_eq!(flipped, randomize_orientation(&pairs, 9));
    }

    #[test]
    fn tsv_round_trip() {
        let vocab = Vocab::synthetic(10, &(0..10).collect::<Vec<_>>());
        let rows = vec![PreferenceTriple { query: vec![4, 5], winner: vec![6], loser: vec![7, 8], delta_au: 0.125, delta_val: -0.5 }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("prefs.tsv");
        write_preferences(&p, &vocab, &rows).unwrap();
        assert_eq!(read_preferences(&p, &vocab).unwrap(), rows);
        std::fs::write(&p, "a\tb\tc\tx\t0\n").unwrap();
        assert!(read_preferences(&p, &vocab).is_err());
    }
}
