//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Exact criteria (losses, gradients, mass, beam, trie membership, metric
//! oracles, reproducibility, serving parity) fail the process. Directional
//! criteria from the desk benchmark are reported but do not.
//!
//! The benchmark trains three seeds of the desk preset under
//! `$CARGO_TARGET_TMPDIR/acceptance`; finished stages are reused on later
//! runs. Delete that directory to retrain from scratch.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;

use mobgm::alignment::{
    dpo_loss, modpo_loss, preference_loss_and_grad, score_with_reference, train_alignment, AlignmentConfig, Objective,
    PreferenceTriple,
};
use mobgm::corpus::{Corpus, Text, TokenId, FIRST_WORD};
use mobgm::discriminators::{AuthenticityModel, DiscriminatorConfig, RelevanceModel, ValueModel};
use mobgm::eval::{authentic_trie, ndcg_at_k, recall_at_k};
use mobgm::nn::{grad_check, Checkpoint, Parameters, TrainConfig};
use mobgm::pipeline::{head_queries, resume, run, Stage, MANIFEST_FILE, METRICS_FILE, TIMING_FILE};
use mobgm::pipeline::RunConfig;
use mobgm::policy::{
    beam_search, ppt_loss_and_grad, train_ppt, train_sft, trie_constrained_beam_search, DecodeConfig, PolicyConfig,
    PolicyModel,
};
use mobgm::serving::{generate_bidwords, replay_traffic, BidwordCache, InvertedIndex, ServingSystem};
use mobgm::util::{derive_seed, rng};

const SEEDS: [u64; 3] = [1, 2, 3];

struct Line {
    id: u32,
    pass: bool,
    exact: bool,
    text: String,
}

#[derive(Default)]
struct Report(Vec<Line>);

impl Report {
    fn exact(&mut self, id: u32, pass: bool, text: impl Into<String>) {
        self.push(id, pass, true, text.into());
    }

    fn directional(&mut self, id: u32, pass: bool, text: impl Into<String>) {
        self.push(id, pass, false, text.into());
    }

    fn push(&mut self, id: u32, pass: bool, exact: bool, text: String) {
        eprintln!("[{}] {id}: {text}", if pass { "PASS" } else { "FAIL" });
        self.0.push(Line { id, pass, exact, text });
    }
}

fn jitter<M: Parameters>(m: &mut M, scale: f64, seed: u64) {
    let mut r = rng(seed);
    for p in m.params_mut() {
        for v in &mut p.values {
            *v += r.random_range(-scale..scale);
        }
    }
}

fn random_policy(words: usize, max_len: usize, seed: u64) -> PolicyModel {
    let cfg = PolicyConfig { embed_dim: 4, hidden_dim: 5, max_len };
    let mut m = PolicyModel::new(FIRST_WORD as usize + words, &cfg, seed);
    jitter(&mut m, 0.6, derive_seed(seed, "jitter"));
    m
}

fn random_text(r: &mut impl rand::Rng, words: usize, min: usize, max: usize) -> Text {
    let n = r.random_range(min..=max);
    (0..n).map(|_| FIRST_WORD + r.random_range(0..words) as TokenId).collect()
}

fn all_targets(words: usize, max_len: usize) -> Vec<Text> {
    let mut out = vec![vec![]];
    let mut frontier: Vec<Text> = vec![vec![]];
    for _ in 0..max_len {
        let next: Vec<Text> = frontier
            .iter()
            .flat_map(|s| (0..words).map(move |w| [s.clone(), vec![FIRST_WORD + w as TokenId]].concat()))
            .collect();
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn loss_identities(rep: &mut Report) {
    let mut worst_neutral = 0.0f64;
    let mut worst_dpo = 0.0f64;
    for i in 0..100u64 {
        let mut r = rng(derive_seed(1, &format!("identity-{i}")));
        let reference = random_policy(5, 4, 100 + i);
        let policy = random_policy(5, 4, 500 + i);
        let t = PreferenceTriple {
            query: random_text(&mut r, 5, 1, 3),
            winner: random_text(&mut r, 5, 0, 4),
            loser: random_text(&mut r, 5, 0, 4),
            delta_au: r.random_range(-1.0..1.0),
            delta_val: r.random_range(-1.0..1.0),
        };
        let w_rel = r.random_range(0.1..0.9);
        let w_au = r.random_range(0.0..1.0 - w_rel);
        let cfg = AlignmentConfig {
            beta_w: r.random_range(0.05..2.0),
            beta_l: r.random_range(0.05..2.0),
            w_rel,
            w_au,
            w_val: 1.0 - w_rel - w_au,
            ..Default::default()
        };
        let neutral = PreferenceTriple { delta_au: 0.0, delta_val: 0.0, ..t.clone() };
        let l = modpo_loss(&reference, &reference, &neutral, &cfg).unwrap();
        worst_neutral = worst_neutral.max((l - 2f64.ln()).abs());

        let beta = cfg.beta_w;
        let single = AlignmentConfig { beta_w: beta, beta_l: beta, w_rel: 1.0, w_au: 0.0, w_val: 0.0, ..cfg };
        let a = modpo_loss(&policy, &reference, &t, &single).unwrap();
        let b = dpo_loss(&policy, &reference, &t.query, &t.winner, &t.loser, beta).unwrap();
        worst_dpo = worst_dpo.max((a - b).abs());
    }
    let pass = worst_neutral <= 1e-12 && worst_dpo <= 1e-12;
    rep.exact(1, pass, format!("loss at the reference is ln 2 (max err {worst_neutral:.1e}); single-objective loss equals DPO (max err {worst_dpo:.1e}); 100 instances"));
}

fn gradient_checks(rep: &mut Report) {
    let start = Instant::now();
    let h = 1e-5;
    let mut errs: Vec<(&str, f64)> = Vec::new();
    let mut worst = |name: &'static str, e: f64| match errs.iter_mut().find(|(n, _)| *n == name) {
        Some(x) => x.1 = x.1.max(e),
        None => errs.push((name, e)),
    };
    let dcfg = DiscriminatorConfig { embed_dim: 4, hidden_dim: 5, ..Default::default() };
    let align = AlignmentConfig::default();
    for i in 0..5u64 {
        let mut r = rng(derive_seed(2, &format!("grad-{i}")));
        let m = random_policy(6, 4, 900 + i);
        let (q, t) = (random_text(&mut r, 6, 1, 4), random_text(&mut r, 6, 0, 4));
        worst("ppt", grad_check(&m, |m| ppt_loss_and_grad(m, &q, &t), h, 300, i).unwrap());
        worst("sft", grad_check(&m, |m| m.logprob_and_grad(&q, &t, -1.0).map(|lp| -lp), h, 300, i).unwrap());

        let reference = random_policy(6, 4, 1900 + i);
        let triple = PreferenceTriple {
            query: q.clone(),
            winner: t.clone(),
            loser: random_text(&mut r, 6, 0, 4),
            delta_au: r.random_range(-1.0..1.0),
            delta_val: r.random_range(-1.0..1.0),
        };
        let scored = score_with_reference(&reference, &[triple]).unwrap();
        for objective in [Objective::MultiObjective, Objective::Dpo { beta: 0.7 }] {
            let e = grad_check(&m, |m| preference_loss_and_grad(m, &scored[0], &align, objective), h, 300, i).unwrap();
            worst("preference", e);
        }

        let vocab = FIRST_WORD as usize + 8;
        let (a, b) = (random_text(&mut r, 8, 1, 4), random_text(&mut r, 8, 1, 4));
        let mut rel = RelevanceModel::new(vocab, &dcfg, i);
        jitter(&mut rel, 0.3, 40 + i);
        let label = mobgm::corpus::RelevanceLabel::ALL[i as usize % 4];
        worst("relevance", grad_check(&rel, |m| m.loss_and_grad(&a, &b, label), h, 300, i).unwrap());
        let mut au = AuthenticityModel::new(vocab, &dcfg, i);
        jitter(&mut au, 0.3, 50 + i);
        worst("authenticity", grad_check(&au, |m| m.loss_and_grad(&b, (i % 2) as u8), h, 300, i).unwrap());
        let mut val = ValueModel::new(vocab, &dcfg, i);
        jitter(&mut val, 0.3, 60 + i);
        let target = r.random_range(-1.0..1.0);
        worst("value", grad_check(&val, |m| m.loss_and_grad(&a, target), h, 300, i).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    let max = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let detail: Vec<String> = errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    rep.exact(2, max < 1e-6 && secs < 60.0, format!("max relative gradient error < 1e-6 ({}) in {secs:.2}s", detail.join(", ")));
}

fn mass_conservation(rep: &mut Report) {
    let (words, max_len) = (3, 3);
    let targets = all_targets(words, max_len);
    assert_eq!(targets.len(), 40);
    let mass = |m: &PolicyModel, q: &Text| -> f64 { targets.iter().map(|t| m.sequence_logprob(q, t).unwrap().exp()).sum() };
    let mut r = rng(3);
    let pairs: Vec<(Text, Text)> = (0..12).map(|_| (random_text(&mut r, words, 1, 3), random_text(&mut r, words, 1, 3))).collect();
    let queries: Vec<Text> = pairs.iter().map(|p| p.0.clone()).collect();
    let tc = TrainConfig { epochs: 3, lr: 1e-2, batch_size: 4, ..Default::default() };
    let mut worst = 0.0f64;
    let mut check = |m: &PolicyModel| {
        for q in &queries {
            worst = worst.max((mass(m, q) - 1.0).abs());
        }
    };
    let mut m = random_policy(words, max_len, 33);
    check(&m);
    train_ppt(&mut m, &pairs, &tc).unwrap();
    check(&m);
    train_sft(&mut m, &pairs, &tc).unwrap();
    check(&m);
    let triples: Vec<PreferenceTriple> = pairs
        .iter()
        .map(|(q, b)| PreferenceTriple { query: q.clone(), winner: b.clone(), loser: q.clone(), delta_au: 0.1, delta_val: -0.2 })
        .collect();
    let cfg = AlignmentConfig { train: tc, ..Default::default() };
    let (aligned, _) = train_alignment(&m, &triples, &cfg, Objective::MultiObjective).unwrap();
    check(&aligned);
    rep.exact(3, worst <= 1e-9, format!("probability over all 40 sequences sums to 1 before and after each training stage (max err {worst:.1e})"));
}

fn beam_optimality(rep: &mut Report) {
    let targets = all_targets(3, 3);
    let cfg = DecodeConfig { beam_width: 27, length_penalty: 0.0, max_new_tokens: 3, constrained: false };
    let mut agree = 0;
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let m = random_policy(3, 3, 7000 + i);
        let q = random_text(&mut rng(i), 3, 1, 3);
        let top = beam_search(&m, &q, &cfg).unwrap();
        let best = targets
            .iter()
            .map(|t| (t, m.sequence_logprob(&q, t).unwrap()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if &top[0].0 == best.0 {
            agree += 1;
        }
        worst = worst.max((top[0].1 - best.1).abs());
    }
    rep.exact(4, agree == 50 && worst < 1e-9, format!("width-27 beam equals brute-force argmax on {agree}/50 instances (score err {worst:.1e})"));
}

fn metric_oracles(rep: &mut Report) {
    fn recall_oracle(gen: &[Text], golden: &[Text], k: usize) -> f64 {
        let g: HashSet<&Text> = golden.iter().collect();
        let top: HashSet<&Text> = gen.iter().take(k).collect();
        top.intersection(&g).count() as f64 / g.len() as f64
    }
    fn ndcg_oracle(gen: &[Text], golden: &[Text], k: usize) -> f64 {
        let n = golden.len();
        let rank: BTreeMap<&Text, usize> = golden.iter().enumerate().map(|(r, b)| (b, r)).collect();
        let mut dcg = 0.0;
        for (i, b) in gen.iter().enumerate().take(k) {
            if let Some(&r) = rank.get(b) {
                dcg += (n - r) as f64 / (2.0 + i as f64).log2();
            }
        }
        let idcg: f64 = (0..n.min(k)).map(|i| (n - i) as f64 / (2.0 + i as f64).log2()).sum();
        dcg / idcg
    }
    let mut r = rng(6);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let pool: Vec<Text> = (0..30u32).map(|i| vec![FIRST_WORD + i]).collect();
        let mut shuffled = pool.clone();
        shuffled.shuffle(&mut r);
        let golden = shuffled[..r.random_range(1..=12)].to_vec();
        shuffled.shuffle(&mut r);
        let gen = shuffled[..r.random_range(0..=15)].to_vec();
        let k = r.random_range(1..=12);
        worst = worst.max((recall_at_k(&gen, &golden, k).unwrap() - recall_oracle(&gen, &golden, k)).abs());
        worst = worst.max((ndcg_at_k(&gen, &golden, k).unwrap() - ndcg_oracle(&gen, &golden, k)).abs());
    }
    // Binary relevance, hits at ranks 1 and 3 of 3, two relevant items.
    let worked = mobgm::eval::ndcg_from_gains(&[1.0, 0.0, 1.0], &[1.0, 1.0], 3).unwrap();
    let pass = worst < 1e-12 && (worked - 0.9197).abs() < 5e-5;
    rep.exact(6, pass, format!("recall and NDCG match brute force on 1000 instances (max err {worst:.1e}); worked NDCG {worked:.4}"));
}

fn seed_config(root: &Path, seed: u64) -> RunConfig {
    let mut c = RunConfig::desk();
    c.seed = seed;
    c.output_dir = root.join(format!("seed{seed}"));
    c
}

type Metrics = BTreeMap<String, BTreeMap<String, f64>>;

fn read_metrics(dir: &Path) -> Metrics {
    let text = std::fs::read_to_string(dir.join(METRICS_FILE)).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mut out = Metrics::new();
    for l in lines {
        let cols: Vec<&str> = l.split(',').collect();
        let row = out.entry(cols[0].to_string()).or_default();
        for (h, v) in header.iter().zip(&cols).skip(3) {
            if let Ok(x) = v.parse::<f64>() {
                row.insert(h.to_string(), x);
            }
        }
    }
    out
}

fn read_kv_csv(path: &Path, key_cols: usize) -> BTreeMap<String, f64> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .filter_map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            Some((cols[..key_cols].join("/"), cols.get(key_cols)?.parse().ok()?))
        })
        .collect()
}

fn benchmark(rep: &mut Report, root: &Path) -> Vec<(u64, PathBuf, f64)> {
    let mut out = Vec::new();
    for seed in SEEDS {
        let cfg = seed_config(root, seed);
        let start = Instant::now();
        resume(&cfg, &Stage::ALL).unwrap();
        eprintln!("seed {seed}: {:.0}s this run", start.elapsed().as_secs_f64());
        let dir = cfg.output_root();
        let timing = std::fs::read_to_string(dir.join(TIMING_FILE)).unwrap();
        // Latest timing of each stage, so resumed runs report their training cost.
        let mut per_stage: BTreeMap<&str, f64> = BTreeMap::new();
        for l in timing.lines() {
            if let Some((s, t)) = l.split_once(',') {
                if let Ok(t) = t.parse() {
                    per_stage.insert(s, t);
                }
            }
        }
        out.push((seed, dir, per_stage.values().sum()));
    }

    let metrics: Vec<Metrics> = out.iter().map(|(_, d, _)| read_metrics(d)).collect();
    let tally = |arm: &str, metric: &str, arm_lower: bool| -> (usize, Vec<String>) {
        let mut n = 0;
        let mut shown = Vec::new();
        for m in &metrics {
            let (f, a) = (m["full"][metric], m[arm][metric]);
            if (arm_lower && a < f) || (!arm_lower && a <= f) {
                n += 1;
            }
            shown.push(format!("{f:.3}/{a:.3}"));
        }
        (n, shown)
    };
    let need = 2;
    for metric in ["relevance_rate", "authenticity_rate", "mean_value"] {
        let (n, shown) = tally("wo_alignment", metric, false);
        rep.directional(7, n >= need, format!("full ≥ SFT-only on {metric} in {n}/3 seeds (full/sft {})", shown.join(" ")));
    }
    for (arm, metric) in [("wo_relevance", "relevance_rate"), ("wo_authenticity", "authenticity_rate"), ("wo_cpm", "mean_value")] {
        let (n, shown) = tally(arm, metric, true);
        rep.directional(7, n >= need, format!("{arm} below full on {metric} in {n}/3 seeds (full/arm {})", shown.join(" ")));
    }
    let slowest = out.iter().map(|o| o.2).fold(0.0, f64::max);
    rep.exact(7, slowest < 1800.0, format!("desk pipeline per seed under 30 min (slowest {slowest:.0}s)"));

    let (n, shown) = tally("w_trie", "relevance_rate", false);
    rep.directional(5, n >= need, format!("trie decoding does not raise relevance in {n}/3 seeds (full/trie {})", shown.join(" ")));

    for (seed, dir, _) in &out {
        let r = read_kv_csv(&dir.join("disc/report.csv"), 2);
        let (ra, aa, r2) = (r["relevance/accuracy"], r["authenticity/accuracy"], r["value/r2"]);
        rep.exact(8, ra >= 0.90 && aa >= 0.90 && r2 >= 0.75, format!("seed {seed}: relevance acc {ra:.3}, authenticity acc {aa:.3}, value R² {r2:.3} (floors 0.90/0.90/0.75)"));
    }
    for (seed, dir, _) in &out {
        let text = std::fs::read_to_string(dir.join("serve/replay.csv")).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let delta: Vec<&str> = lines.find(|l| l.starts_with("delta_pct")).unwrap().split(',').collect();
        let col = |name: &str| -> f64 { delta[header.iter().position(|h| *h == name).unwrap()].parse().unwrap() };
        let (cpm, rev) = (col("cpm"), col("revenue"));
        rep.directional(9, cpm > 0.0 && rev > 0.0, format!("seed {seed}: aligned vs SFT replay CPM {cpm:+.2}%, revenue {rev:+.2}%"));
    }
    out
}

fn trie_membership(rep: &mut Report, cfg: &RunConfig) {
    let corpus = Corpus::generate(&cfg.corpus, cfg.seed).unwrap();
    let dir = cfg.output_root();
    let model = PolicyModel::from_checkpoint(&Checkpoint::load(&dir.join("align/full.ckpt")).unwrap()).unwrap();
    let trie = authentic_trie(&corpus.world, &corpus.logs, cfg.corpus.datasets.authenticity_threshold).unwrap();
    let (mut decodes, mut outputs, mut members) = (0, 0, 0);
    for q in corpus.logs.queries.iter().take(1000) {
        for (b, _) in trie_constrained_beam_search(&model, &q.text, &trie, &cfg.decode).unwrap() {
            outputs += 1;
            if trie.contains(&b) && corpus.world.bidword(&b).is_some() {
                members += 1;
            }
        }
        decodes += 1;
    }
    rep.exact(5, outputs > 0 && members == outputs, format!("{decodes} trie-constrained decodes: {members}/{outputs} outputs in the inventory"));
}

fn serving_checks(rep: &mut Report, cfg: &RunConfig) {
    let dir = cfg.output_root();
    let corpus = Corpus::generate(&cfg.corpus, cfg.seed).unwrap();
    let vocab = &corpus.world.vocab;
    let load = |p: &str| Checkpoint::load(&dir.join(p)).unwrap();
    let model = PolicyModel::from_checkpoint(&load("align/full.ckpt")).unwrap();
    let relevance = RelevanceModel::from_checkpoint(&load("disc/relevance.ckpt")).unwrap();
    let cache = BidwordCache::load(&dir.join("serve/cache.tsv"), vocab).unwrap();
    let sc = &cfg.serving;
    let seed = derive_seed(cfg.seed, "serving");
    let heads = head_queries(&corpus, 100);
    let mut same = 0;
    for q in &heads {
        let (fresh, _) = generate_bidwords(&model, q, &cfg.decode, sc.bidwords_per_query, sc.sample_retries, seed).unwrap();
        if cache.get(q) == Some(&fresh) {
            same += 1;
        }
    }
    rep.exact(9, same == heads.len(), format!("cache equals real-time generation on {same}/{} head queries", heads.len()));

    let index = InvertedIndex::build(&corpus.world);
    let config = mobgm::serving::ServingConfig { seed, ..sc.clone() };
    let system = || ServingSystem {
        world: &corpus.world,
        model: &model,
        relevance: &relevance,
        cache: cache.clone(),
        index: &index,
        decode: cfg.decode,
        config: config.clone(),
    };
    let stream: Vec<_> = corpus.logs.queries.iter().take(200).cloned().collect();
    let r = replay_traffic(&system(), &system(), &stream, &cfg.corpus.clicks, seed).unwrap();
    let zero = r.a == r.b && r.delta_cpm_pct == 0.0 && r.delta_revenue_pct == 0.0 && r.delta_cpc_pct == 0.0;
    rep.exact(9, zero, format!("identical arms over 200 replayed queries: CPM {:+}%, revenue {:+}%", r.delta_cpm_pct, r.delta_revenue_pct));
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != TIMING_FILE && n != "config.toml") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn reproducibility(rep: &mut Report) {
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let mut c = RunConfig::smoke();
        c.output_dir = tmp.path().join(name);
        run(&c, &Stage::ALL).unwrap();
        trees.push(files_under(&c.output_root()));
    }
    let same = trees[0] == trees[1] && trees[0].contains_key(Path::new(MANIFEST_FILE));
    rep.exact(10, same, format!("two full smoke-scale runs give byte-identical outputs ({} files)", trees[0].len()));
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).is_test(true).try_init();
    let mut rep = Report::default();
    loss_identities(&mut rep);
    gradient_checks(&mut rep);
    mass_conservation(&mut rep);
    beam_optimality(&mut rep);
    metric_oracles(&mut rep);
    reproducibility(&mut rep);

    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let seeds = benchmark(&mut rep, &root);
    let first = seed_config(&root, seeds[0].0);
    trie_membership(&mut rep, &first);
    serving_checks(&mut rep, &first);

    rep.0.sort_by_key(|l| l.id);
    println!();
    for l in &rep.0 {
        let kind = if l.exact { "" } else { " [directional]" };
        println!("{} criterion {}{kind}: {}", if l.pass { "PASS" } else { "FAIL" }, l.id, l.text);
    }
    let exact_failures = rep.0.iter().filter(|l| l.exact && !l.pass).count();
    let directional_failures = rep.0.iter().filter(|l| !l.exact && !l.pass).count();
    println!("{exact_failures} exact failures, {directional_failures} directional failures");
    if exact_failures > 0 {
        std::process::exit(1);
    }
}
