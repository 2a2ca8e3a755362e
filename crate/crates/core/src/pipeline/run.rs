use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::stages::{ablation_config, ablation_inputs, run_ppt, run_sft, split_data, train_discriminators, DataSplits};
use crate::alignment::write_preferences;
use crate::corpus::{Corpus, Text, Tier};
use crate::discriminators::{AuthenticityModel, Discriminators, RelevanceModel, ValueModel};
use crate::eval::{append_csv, evaluate_arms, train_arms, Arm, MetricsReport, TrainedArm};
use crate::nn::Checkpoint;
use crate::policy::PolicyModel;
use crate::serving::{precompute_cache, replay_traffic, BidwordCache, InvertedIndex, ServingSystem};
use crate::util::{derive_seed, fmt_f64, rng, sha256_hex};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Corpus,
    Disc,
    Ppt,
    Sft,
    Align,
    Eval,
    Serve,
}

impl Stage {
    pub const ALL: [Stage; 7] = [Stage::Corpus, Stage::Disc, Stage::Ppt, Stage::Sft, Stage::Align, Stage::Eval, Stage::Serve];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Corpus => "corpus",
            Stage::Disc => "disc",
            Stage::Ppt => "ppt",
            Stage::Sft => "sft",
            Stage::Align => "align",
            Stage::Eval => "eval",
            Stage::Serve => "serve",
        }
    }

    /// `all` or a comma-separated list; the result is in dependency order.
    pub fn parse_list(s: &str) -> Result<Vec<Stage>> {
        if s.trim() == "all" {
            return Ok(Stage::ALL.to_vec());
        }
        let mut out = s
            .split(',')
            .map(|p| {
                let p = p.trim();
                Stage::ALL.into_iter().find(|st| st.name() == p).ok_or_else(|| Error::Config(format!("unknown stage `{p}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output root.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub artifacts: Vec<Artifact>,
}

/// What a run produced. Contains no timestamps or absolute paths, so equal
/// configs give equal manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const METRICS_FILE: &str = "eval/metrics.csv";
/// `stage,seconds` lines appended by every executed stage.
pub const TIMING_FILE: &str = "timing.csv";

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn record(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }
}

/// Lazily produced or loaded inputs shared by the stages.
struct Run<'a> {
    config: &'a RunConfig,
    root: PathBuf,
    corpus: Option<Corpus>,
    splits: Option<DataSplits>,
    discs: Option<Discriminators>,
    ppt: Option<PolicyModel>,
    sft: Option<PolicyModel>,
    arms: Option<Vec<TrainedArm>>,
}

fn write_curve(path: &Path, curve: &[f64]) -> Result<()> {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, fmt_f64(*l)));
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn checkpoint_name(arm: Arm) -> Option<&'static str> {
    match arm {
        Arm::TrieDecoding | Arm::NoAlignment => None,
        a => Some(a.name()),
    }
}

impl Run<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn require(&self, stage: Stage, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::MissingInput { stage: stage.name().into(), path: p })
        }
    }

    fn load_policy(&self, stage: Stage, rel: &str) -> Result<PolicyModel> {
        PolicyModel::from_checkpoint(&Checkpoint::load(&self.require(stage, rel)?)?)
    }

    /// The corpus is cheap to regenerate; a previous corpus stage must have
    /// run with the same config, which the world file hash confirms.
    fn corpus(&mut self, stage: Stage) -> Result<&Corpus> {
        if self.corpus.is_none() {
            let p = self.require(stage, "corpus/world.tsv")?;
            let c = Corpus::generate(&self.config.corpus, self.config.seed)?;
            if sha256_hex(c.world.to_tsv().as_bytes()) != sha256_hex(&std::fs::read(&p)?) {
                return Err(Error::Precondition(format!("{} was written under a different config", p.display())));
            }
            self.corpus = Some(c);
        }
        Ok(self.corpus.as_ref().expect("set above"))
    }

    fn splits(&mut self, stage: Stage) -> Result<&DataSplits> {
        if self.splits.is_none() {
            let config = self.config;
            let s = split_data(self.corpus(stage)?, config)?;
            self.splits = Some(s);
        }
        Ok(self.splits.as_ref().expect("set above"))
    }

    fn discs(&mut self, stage: Stage) -> Result<&Discriminators> {
        if self.discs.is_none() {
            let ck = |name: &str| -> Result<Checkpoint> { Checkpoint::load(&self.require(stage, &format!("disc/{name}.ckpt"))?) };
            self.discs = Some(Discriminators {
                relevance: RelevanceModel::from_checkpoint(&ck("relevance")?)?,
                authenticity: AuthenticityModel::from_checkpoint(&ck("authenticity")?)?,
                value: ValueModel::from_checkpoint(&ck("value")?)?,
            });
        }
        Ok(self.discs.as_ref().expect("set above"))
    }

    fn ppt(&mut self, stage: Stage) -> Result<&PolicyModel> {
        if self.ppt.is_none() {
            self.ppt = Some(self.load_policy(stage, "policy/ppt.ckpt")?);
        }
        Ok(self.ppt.as_ref().expect("set above"))
    }

    fn sft(&mut self, stage: Stage) -> Result<&PolicyModel> {
        if self.sft.is_none() {
            self.sft = Some(self.load_policy(stage, "policy/sft.ckpt")?);
        }
        Ok(self.sft.as_ref().expect("set above"))
    }

    fn arms_list(&self) -> Result<Vec<Arm>> {
        let mut arms = vec![Arm::Full];
        for a in Arm::parse_list(&self.config.eval.arms)? {
            if !arms.contains(&a) {
                arms.push(a);
            }
        }
        Ok(arms)
    }

    fn trained_arms(&mut self, stage: Stage) -> Result<Vec<TrainedArm>> {
        if let Some(a) = self.arms.take() {
            return Ok(a);
        }
        let mut out = Vec::new();
        for arm in self.arms_list()? {
            let model = match checkpoint_name(arm) {
                Some(n) => self.load_policy(stage, &format!("align/{n}.ckpt"))?,
                None if arm == Arm::TrieDecoding => self.load_policy(stage, "align/full.ckpt")?,
                None => self.sft(stage)?.clone(),
            };
            out.push(TrainedArm { arm, model, n_pairs: 0, loss_curve: vec![] });
        }
        Ok(out)
    }

    fn run_stage(&mut self, stage: Stage) -> Result<Vec<PathBuf>> {
        let config = self.config;
        match stage {
            Stage::Corpus => {
                let c = Corpus::generate(&config.corpus, config.seed)?;
                let files = c.write_files(&config.corpus, config.seed, config.seed, &self.path("corpus"))?;
                self.corpus = Some(c);
                Ok(files)
            }
            Stage::Disc => {
                let (d, report) = train_discriminators(self.corpus(stage)?, config)?;
                std::fs::create_dir_all(self.path("disc"))?;
                let mut files = Vec::new();
                for (name, ck) in [
                    ("relevance", d.relevance.to_checkpoint()),
                    ("authenticity", d.authenticity.to_checkpoint()),
                    ("value", d.value.to_checkpoint()),
                ] {
                    let p = self.path(&format!("disc/{name}.ckpt"));
                    ck.save(&p)?;
                    files.push(p);
                }
                let p = self.path("disc/report.csv");
                std::fs::write(
                    &p,
                    format!(
                        "task,metric,value,baseline\nrelevance,accuracy,{},{}\nauthenticity,accuracy,{},{}\nvalue,r2,{},0\nvalue,mse,{},{}\n",
                        fmt_f64(report.relevance_accuracy),
                        fmt_f64(report.relevance_majority),
                        fmt_f64(report.authenticity_accuracy),
                        fmt_f64(report.authenticity_majority),
                        fmt_f64(report.value.r2),
                        fmt_f64(report.value.mse),
                        fmt_f64(report.value.variance),
                    ),
                )?;
                files.push(p);
                self.discs = Some(d);
                Ok(files)
            }
            Stage::Ppt | Stage::Sft => {
                self.splits(stage)?;
                let (model, curve) = if stage == Stage::Ppt {
                    run_ppt(self.corpus.as_ref().expect("loaded"), self.splits.as_ref().expect("loaded"), config)?
                } else {
                    self.ppt(stage)?;
                    run_sft(self.ppt.as_ref().expect("loaded"), self.splits.as_ref().expect("loaded"), config)?
                };
                std::fs::create_dir_all(self.path("policy"))?;
                let ck = self.path(&format!("policy/{}.ckpt", stage.name()));
                let lc = self.path(&format!("policy/{}_loss.csv", stage.name()));
                model.to_checkpoint().save(&ck)?;
                write_curve(&lc, &curve)?;
                if stage == Stage::Ppt {
                    self.ppt = Some(model);
                } else {
                    self.sft = Some(model);
                }
                Ok(vec![ck, lc])
            }
            Stage::Align => {
                let arms = self.arms_list()?;
                self.splits(stage)?;
                self.discs(stage)?;
                self.sft(stage)?;
                if arms.contains(&Arm::NoFinetune) {
                    self.ppt(stage)?;
                }
                let sft = self.sft.as_ref().expect("loaded");
                let ppt = self.ppt.as_ref().unwrap_or(sft);
                let corpus = self.corpus.as_ref().expect("loaded");
                let inputs = ablation_inputs(corpus, self.discs.as_ref().expect("loaded"), ppt, sft, self.splits.as_ref().expect("loaded"), config);
                let (trained, prefs) = train_arms(&inputs, &arms, &ablation_config(config))?;
                std::fs::create_dir_all(self.path("align"))?;
                let p = self.path("align/preferences.tsv");
                write_preferences(&p, &corpus.world.vocab, &prefs)?;
                let mut files = vec![p];
                for t in &trained {
                    if let Some(n) = checkpoint_name(t.arm) {
                        let ck = self.path(&format!("align/{n}.ckpt"));
                        let lc = self.path(&format!("align/{n}_loss.csv"));
                        t.model.to_checkpoint().save(&ck)?;
                        write_curve(&lc, &t.loss_curve)?;
                        files.extend([ck, lc]);
                    }
                }
                self.arms = Some(trained);
                Ok(files)
            }
            Stage::Eval => {
                let trained = self.trained_arms(stage)?;
                self.splits(stage)?;
                self.discs(stage)?;
                let sft = self.sft(stage)?.clone();
                let inputs = ablation_inputs(
                    self.corpus.as_ref().expect("loaded"),
                    self.discs.as_ref().expect("loaded"),
                    &sft,
                    &sft,
                    self.splits.as_ref().expect("loaded"),
                    config,
                );
                let report = evaluate_arms(&inputs, trained, &ablation_config(config))?;
                std::fs::create_dir_all(self.path("eval"))?;
                let m = self.path(METRICS_FILE);
                let _ = std::fs::remove_file(&m);
                let reports: Vec<MetricsReport> = report.results.iter().map(|r| r.report.clone()).collect();
                append_csv(&m, &reports)?;
                let c = self.path("eval/checks.csv");
                let mut s = String::from("arm,metric,full,arm_value,expect_lower,holds\n");
                for ch in &report.checks {
                    s.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        ch.arm.name(),
                        ch.metric,
                        fmt_f64(ch.full),
                        fmt_f64(ch.arm_value),
                        ch.expect_lower,
                        ch.holds
                    ));
                }
                std::fs::write(&c, s)?;
                self.arms = Some(
                    report
                        .results
                        .into_iter()
                        .map(|r| TrainedArm { arm: r.arm, model: r.model, n_pairs: r.n_pairs, loss_curve: r.loss_curve })
                        .collect(),
                );
                Ok(vec![m, c])
            }
            Stage::Serve => {
                let trained = self.trained_arms(stage)?;
                let full = trained.iter().find(|t| t.arm == Arm::Full).map(|t| t.model.clone());
                self.arms = Some(trained);
                let full = match full {
                    Some(m) => m,
                    None => self.load_policy(stage, "align/full.ckpt")?,
                };
                let sft = self.sft(stage)?.clone();
                self.discs(stage)?;
                let corpus = self.corpus(stage)?.clone();
                let files = serve_stage(self, &corpus, &full, &sft)?;
                Ok(files)
            }
        }
    }
}

/// Head-tier queries by descending frequency, capped by `cache_queries`.
pub fn head_queries(corpus: &Corpus, cap: usize) -> Vec<Text> {
    let mut heads: Vec<_> = corpus.logs.queries.iter().filter(|q| q.tier == Tier::Head).collect();
    heads.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.text.cmp(&b.text)));
    let n = if cap == 0 { heads.len() } else { cap.min(heads.len()) };
    heads[..n].iter().map(|q| q.text.clone()).collect()
}

fn serve_stage(run: &Run, corpus: &Corpus, full: &PolicyModel, sft: &PolicyModel) -> Result<Vec<PathBuf>> {
    let config = run.config;
    let sc = &config.serving;
    let seed = derive_seed(config.seed, "serving");
    let sc = crate::serving::ServingConfig { seed, ..sc.clone() };
    let heads = head_queries(corpus, sc.cache_queries);
    let index = InvertedIndex::build(&corpus.world);
    let relevance = &run.discs.as_ref().expect("loaded").relevance;
    let build = |m: &PolicyModel| precompute_cache(m, &heads, &config.decode, sc.bidwords_per_query, sc.sample_retries, seed);
    let (cache_b, cache_a) = (build(full)?, build(sft)?);
    std::fs::create_dir_all(run.path("serve"))?;
    let (pb, pa) = (run.path("serve/cache.tsv"), run.path("serve/cache_sft.tsv"));
    cache_b.save(&pb, &corpus.world.vocab)?;
    cache_a.save(&pa, &corpus.world.vocab)?;
    let system = |model, cache: BidwordCache| ServingSystem {
        world: &corpus.world,
        model,
        relevance,
        cache,
        index: &index,
        decode: config.decode,
        config: sc.clone(),
    };
    let mut stream = corpus.logs.queries.clone();
    stream.shuffle(&mut rng(derive_seed(seed, "stream")));
    stream.truncate(sc.replay_queries);
    let report = replay_traffic(&system(sft, cache_a), &system(full, cache_b), &stream, &config.corpus.clicks, seed)?;
    info!(
        "replay: CPM {:+.2}% revenue {:+.2}% (sft {:.3} vs aligned {:.3})",
        report.delta_cpm_pct, report.delta_revenue_pct, report.a.cpm, report.b.cpm
    );
    let pr = run.path("serve/replay.csv");
    std::fs::write(&pr, report.to_csv())?;
    Ok(vec![pb, pa, pr])
}

/// Runs `stages` in dependency order under `config.output_root()`. Inputs of
/// a stage that is not requested are read from earlier outputs; the
/// manifest keeps records of earlier stages run under the same config.
pub fn run(config: &RunConfig, stages: &[Stage]) -> Result<Manifest> {
    run_with(config, stages, false)
}

/// Like [`run`], but stages already recorded under the same config whose
/// artifacts are unchanged on disk are skipped.
pub fn resume(config: &RunConfig, stages: &[Stage]) -> Result<Manifest> {
    run_with(config, stages, true)
}

fn artifacts_intact(root: &Path, record: &StageRecord) -> bool {
    record.artifacts.iter().all(|a| std::fs::read(root.join(&a.path)).is_ok_and(|b| sha256_hex(&b) == a.sha256))
}

fn run_with(config: &RunConfig, stages: &[Stage], skip_done: bool) -> Result<Manifest> {
    config.validate()?;
    let root = config.output_root();
    std::fs::create_dir_all(&root)?;
    std::fs::write(root.join("config.toml"), config.to_toml()?)?;
    let config_hash = config.hash()?;
    let mut records: BTreeMap<Stage, StageRecord> = match Manifest::load(&root.join(MANIFEST_FILE)) {
        Ok(m) if m.config_hash == config_hash => m.stages.into_iter().map(|r| (r.stage, r)).collect(),
        _ => BTreeMap::new(),
    };
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    if skip_done {
        stages.retain(|s| !records.get(s).is_some_and(|r| artifacts_intact(&root, r)));
    }
    let mut run = Run { config, root: root.clone(), corpus: None, splits: None, discs: None, ppt: None, sft: None, arms: None };
    for stage in stages {
        info!("stage {}", stage.name());
        let start = std::time::Instant::now();
        let files = run.run_stage(stage).map_err(|e| Error::Stage { stage: stage.name().into(), source: Box::new(e) })?;
        // Wall time lives outside the manifest, which must stay reproducible.
        let mut t = std::fs::OpenOptions::new().create(true).append(true).open(root.join(TIMING_FILE))?;
        writeln!(t, "{},{:.3}", stage.name(), start.elapsed().as_secs_f64())?;
        let artifacts = files
            .iter()
            .map(|p| {
                Ok(Artifact {
                    path: p.strip_prefix(&root).unwrap_or(p).to_string_lossy().replace('\\', "/"),
                    sha256: sha256_hex(&std::fs::read(p)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        records.insert(stage, StageRecord { stage, artifacts });
    }
    let manifest = Manifest { config_hash, seed: config.seed, stages: records.into_values().collect() };
    std::fs::write(root.join(MANIFEST_FILE), manifest.to_toml()?)?;
    Ok(manifest)
}

/// Consolidates the metric files of several runs into one long-format CSV:
/// `seed,config,arm,metric,value`, one row per (run, arm, metric).
/// `roots` are output directories holding a manifest.
pub fn emit_report(roots: &[PathBuf], out: &Path) -> Result<()> {
    if roots.is_empty() {
        return Err(Error::Precondition("emit_report needs at least one manifest".into()));
    }
    let mut s = String::from("seed,config,arm,metric,value\n");
    for root in roots {
        let m = Manifest::load(&root.join(MANIFEST_FILE))?;
        let Some(rec) = m.record(Stage::Eval) else {
            return Err(Error::MissingInput { stage: "report".into(), path: root.join(METRICS_FILE) });
        };
        for a in &rec.artifacts {
            if a.path != METRICS_FILE {
                continue;
            }
            let content = std::fs::read_to_string(root.join(&a.path))?;
            let mut lines = content.lines();
            let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
            for line in lines {
                let cols: Vec<&str> = line.split(',').collect();
                for (name, v) in header.iter().zip(&cols).skip(3) {
                    if !v.is_empty() {
                        s.push_str(&format!("{},{},{},{name},{v}\n", m.seed, &m.config_hash[..12], cols[0]));
                    }
                }
            }
        }
    }
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_in(dir: &Path) -> RunConfig {
        RunConfig { output_dir: dir.to_path_buf(), ..RunConfig::smoke() }
    }

    #[test]
    fn stage_lists_parse_in_dependency_order() {
        assert_eq!(Stage::parse_list("all").unwrap(), Stage::ALL.to_vec());
        assert_eq!(Stage::parse_list("eval, sft,eval").unwrap(), vec![Stage::Sft, Stage::Eval]);
        assert!(Stage::parse_list("sft,polish").is_err());
    }

    #[test]
    fn corpus_only_run_records_one_stage() {
        let dir = tempfile::tempdir().unwrap();
        let m = run(&smoke_in(dir.path()), &[Stage::Corpus]).unwrap();
        assert_eq!(m.stages.len(), 1);
        assert_eq!(m.stages[0].artifacts.len(), Corpus::FILES.len());
        assert_eq!(Manifest::load(&dir.path().join(MANIFEST_FILE)).unwrap(), m);
    }

    #[test]
    fn missing_checkpoint_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let c = smoke_in(dir.path());
        run(&c, &[Stage::Corpus]).unwrap();
        match run(&c, &[Stage::Sft]) {
            Err(Error::Stage { stage, source }) => {
                assert_eq!(stage, "sft");
                assert!(matches!(*source, Error::MissingInput { ref path, .. } if path.ends_with("policy/ppt.ckpt")));
            }
            other => panic!("expected a stage error, got {other:?}"),
        }
    }

    #[test]
    fn full_runs_reproduce_and_resume() {
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let m1 = run(&smoke_in(d1.path()), &Stage::ALL).unwrap();
        let m2 = run(&smoke_in(d2.path()), &Stage::ALL).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.stages.len(), Stage::ALL.len());

        // Resuming at alignment reads the SFT checkpoint and leaves PPT alone.
        let m3 = run(&smoke_in(d1.path()), &[Stage::Align, Stage::Eval]).unwrap();
        assert_eq!(m3, m1);
        let timed = std::fs::read_to_string(d1.path().join(TIMING_FILE)).unwrap().lines().count();
        let m4 = resume(&smoke_in(d1.path()), &Stage::ALL).unwrap();
        assert_eq!(m4, m1);
        assert_eq!(std::fs::read_to_string(d1.path().join(TIMING_FILE)).unwrap().lines().count(), timed);

        let out = d1.path().join("report.csv");
        emit_report(&[d1.path().to_path_buf(), d2.path().to_path_buf()], &out).unwrap();
        let first = std::fs::read_to_string(&out).unwrap();
        emit_report(&[d1.path().to_path_buf(), d2.path().to_path_buf()], &out).unwrap();
        assert_eq!(std::fs::read_to_string(&out).unwrap(), first);
        let rows = first.lines().count() - 1;
        assert_eq!(rows, 2 * Arm::ALL.len() * 9);
    }
}
