use std::io::BufReader;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use mobgm::alignment::{build_preference_pairs, candidate_pool, read_preferences, train_alignment, write_preferences, Objective};
use mobgm::corpus::io::{read_golden, read_labelled, read_pairs, read_queries, read_relevance, read_values, read_vocab};
use mobgm::corpus::{balance_binary, oversample_binary, search_frequencies, Corpus, Text, Vocab};
use mobgm::discriminators::{
    authenticity_accuracy, relevance_accuracy, train_authenticity, train_relevance, train_value, value_fit,
    AuthenticityModel, Discriminators, RelevanceModel, ValueModel,
};
use mobgm::eval::{append_csv, authentic_trie, generate_all, score_generated};
use mobgm::nn::Checkpoint;
use mobgm::pipeline::{emit_report, head_queries, run, RunConfig, Stage};
use mobgm::policy::{beam_search, build_trie, train_ppt, train_sft, trie_constrained_beam_search, DecodeConfig, PolicyModel};
use mobgm::serving::{listen, precompute_cache, replay_traffic, InvertedIndex, ServingSystem};
use mobgm::util::{derive_seed, fmt_f64};
use mobgm::Result;

#[derive(Parser)]
#[command(name = "mobgm", version, about = "Multi-objective bidword generation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic world and datasets.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Reward models.
    #[command(subcommand)]
    Disc(DiscCmd),
    /// Bidword generator training and decoding.
    #[command(subcommand)]
    Policy(PolicyCmd),
    /// Preference pairs and alignment training.
    #[command(subcommand)]
    Align(AlignCmd),
    /// Offline metrics and ablations.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Serving simulation.
    #[command(subcommand)]
    Serve(ServeCmd),
    /// Run pipeline stages under one config.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `all` or a comma-separated subset of corpus,disc,ppt,sft,align,eval,serve.
        #[arg(long, default_value = "all")]
        stages: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge the metric files of finished runs into one CSV.
    Report {
        #[arg(long)]
        out: PathBuf,
        runs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// Run config file; the desk preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::load(p),
            None => Ok(RunConfig::desk()),
        }
    }
}

#[derive(Subcommand)]
enum CorpusCmd {
    Gen {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Relevance,
    Authenticity,
    Value,
}

#[derive(Subcommand)]
enum DiscCmd {
    Train {
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `vocab.txt` next to the data file.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArg,
    },
    Eval {
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PolicyCmd {
    Pretrain(TrainArgs),
    Sft(TrainArgs),
    Decode {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        beams: usize,
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[arg(long, default_value_t = 16)]
        max_new: usize,
        /// File of allowed bidwords, one per line.
        #[arg(long)]
        trie: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Start from this checkpoint instead of a fresh model.
    #[arg(long)]
    ckpt_in: Option<PathBuf>,
    #[arg(long)]
    ckpt_out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Modpo,
    Dpo,
}

#[derive(Subcommand)]
enum AlignCmd {
    BuildPairs {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        disc_dir: PathBuf,
        /// One query per line.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    Train {
        #[arg(long)]
        ckpt_in: PathBuf,
        #[arg(long)]
        prefs: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        ckpt_out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        beta_w: f64,
        #[arg(long, default_value_t = 0.25)]
        beta_l: f64,
        #[arg(long, default_value_t = 0.5)]
        w_rel: f64,
        #[arg(long, default_value_t = 0.2)]
        w_au: f64,
        #[arg(long, default_value_t = 0.3)]
        w_val: f64,
        #[arg(long, default_value_t = 2)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-6)]
        lr: f64,
        #[arg(long, value_enum, default_value = "modpo")]
        objective: ObjectiveArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Decode the golden queries of a corpus and append one metrics row.
    Run {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "model")]
        name: String,
        /// Evaluate on at most this many golden queries (0 = all).
        #[arg(long, default_value_t = 0)]
        limit: usize,
        /// Constrain decoding to authentic inventory bidwords.
        #[arg(long)]
        trie: bool,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Train and score ablation arms on top of finished earlier stages.
    Ablate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "all")]
        arms: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    disc_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Subcommand)]
enum ServeCmd {
    Replay {
        #[arg(long)]
        arm_a: PathBuf,
        #[arg(long)]
        arm_b: PathBuf,
        /// Query file in the corpus `queries.tsv` format.
        #[arg(long)]
        traffic: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        serve: ServeArgs,
    },
    Listen {
        #[arg(long)]
        ckpt: PathBuf,
        /// TCP port on 127.0.0.1; reads stdin when omitted.
        #[arg(long)]
        port: Option<u16>,
        #[command(flatten)]
        serve: ServeArgs,
    },
}

fn vocab_for(data: &Path, vocab: &Option<PathBuf>) -> Result<Vocab> {
    let p = vocab.clone().unwrap_or_else(|| data.parent().unwrap_or(Path::new(".")).join("vocab.txt"));
    read_vocab(&p)
}

fn load_policy(p: &Path) -> Result<PolicyModel> {
    PolicyModel::from_checkpoint(&Checkpoint::load(p)?)
}

fn load_discs(dir: &Path) -> Result<Discriminators> {
    let ck = |n: &str| Checkpoint::load(&dir.join(format!("{n}.ckpt")));
    Ok(Discriminators {
        relevance: RelevanceModel::from_checkpoint(&ck("relevance")?)?,
        authenticity: AuthenticityModel::from_checkpoint(&ck("authenticity")?)?,
        value: ValueModel::from_checkpoint(&ck("value")?)?,
    })
}

fn print_curve(curve: &[f64]) {
    for (i, l) in curve.iter().enumerate() {
        println!("epoch {}\tloss {}", i + 1, fmt_f64(*l));
    }
}

fn corpus_cmd(cmd: CorpusCmd) -> Result<()> {
    let CorpusCmd::Gen { config, seed, out } = cmd;
    let c = config.load()?;
    let seed = seed.unwrap_or(c.seed);
    let corpus = Corpus::generate(&c.corpus, seed)?;
    for p in corpus.write_files(&c.corpus, seed, seed, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn disc_cmd(cmd: DiscCmd) -> Result<()> {
    match cmd {
        DiscCmd::Train { task, data, out, vocab, config } => {
            let c = config.load()?;
            let d = &c.discriminators;
            let v = vocab_for(&data, &vocab)?;
            let seed = derive_seed(c.seed, "discriminators");
            let (ck, curve) = match task {
                Task::Relevance => {
                    let mut m = RelevanceModel::new(v.len(), d, seed);
                    let curve = train_relevance(&mut m, &read_relevance(&data, &v)?, &d.relevance)?;
                    (m.to_checkpoint(), curve)
                }
                Task::Authenticity => {
                    let mut m = AuthenticityModel::new(v.len(), d, seed);
                    let rows = oversample_binary(&read_labelled(&data, &v)?, seed);
                    let curve = train_authenticity(&mut m, &rows, &d.authenticity)?;
                    (m.to_checkpoint(), curve)
                }
                Task::Value => {
                    let mut m = ValueModel::new(v.len(), d, seed);
                    let curve = train_value(&mut m, &read_values(&data, &v)?, &d.value)?;
                    (m.to_checkpoint(), curve)
                }
            };
            ck.save(&out)?;
            print_curve(&curve);
        }
        DiscCmd::Eval { task, ckpt, data, vocab } => {
            let v = vocab_for(&data, &vocab)?;
            let ck = Checkpoint::load(&ckpt)?;
            println!("task,metric,value");
            match task {
                Task::Relevance => {
                    let acc = relevance_accuracy(&RelevanceModel::from_checkpoint(&ck)?, &read_relevance(&data, &v)?);
                    println!("relevance,accuracy,{}", fmt_f64(acc));
                }
                Task::Authenticity => {
                    let rows = balance_binary(&read_labelled(&data, &v)?, 0);
                    let acc = authenticity_accuracy(&AuthenticityModel::from_checkpoint(&ck)?, &rows);
                    println!("authenticity,accuracy,{}", fmt_f64(acc));
                }
                Task::Value => {
                    let fit = value_fit(&ValueModel::from_checkpoint(&ck)?, &read_values(&data, &v)?);
                    println!("value,mse,{}\nvalue,r2,{}\nvalue,spearman,{}", fmt_f64(fit.mse), fmt_f64(fit.r2), fmt_f64(fit.spearman));
                }
            }
        }
    }
    Ok(())
}

fn policy_train(args: TrainArgs, sft: bool) -> Result<()> {
    let c = args.config.load()?;
    let v = vocab_for(&args.data, &args.vocab)?;
    let mut m = match &args.ckpt_in {
        Some(p) => load_policy(p)?,
        None => PolicyModel::new(v.len(), &c.policy, derive_seed(c.seed, "policy-init")),
    };
    let pairs = read_pairs(&args.data, &v)?;
    let curve = if sft {
        train_sft(&mut m, &pairs, &c.sft.train)?
    } else {
        train_ppt(&mut m, &pairs, &c.ppt.train)?
    };
    m.to_checkpoint().save(&args.ckpt_out)?;
    print_curve(&curve);
    Ok(())
}

fn policy_cmd(cmd: PolicyCmd) -> Result<()> {
    match cmd {
        PolicyCmd::Pretrain(a) => policy_train(a, false),
        PolicyCmd::Sft(a) => policy_train(a, true),
        PolicyCmd::Decode { ckpt, vocab, query, beams, alpha, max_new, trie } => {
            let v = read_vocab(&vocab)?;
            let m = load_policy(&ckpt)?;
            let q = v.encode(&query);
            let decode = DecodeConfig { beam_width: beams, length_penalty: alpha, max_new_tokens: max_new, constrained: trie.is_some() };
            let out = match trie {
                Some(p) => {
                    let words: Vec<Text> = std::fs::read_to_string(p)?.lines().filter(|l| !l.is_empty()).map(|l| v.encode(l)).collect();
                    trie_constrained_beam_search(&m, &q, &build_trie(&words)?, &decode)?
                }
                None => beam_search(&m, &q, &decode)?,
            };
            for (b, s) in out {
                println!("{}\t{}", v.decode(&b), fmt_f64(s));
            }
            Ok(())
        }
    }
}

fn align_cmd(cmd: AlignCmd) -> Result<()> {
    match cmd {
        AlignCmd::BuildPairs { ckpt, disc_dir, queries, vocab, out, config } => {
            let c = config.load()?;
            let v = read_vocab(&vocab)?;
            let m = load_policy(&ckpt)?;
            let discs = load_discs(&disc_dir)?;
            let mut rows = Vec::new();
            for (i, line) in std::fs::read_to_string(&queries)?.lines().filter(|l| !l.is_empty()).enumerate() {
                let q = v.encode(line.split('\t').next().unwrap_or(line));
                let seed = derive_seed(c.seed, &format!("sft-cands-{i}"));
                let cands = candidate_pool(&m, &q, &c.decode, c.alignment.candidate_beam, c.alignment.candidate_samples, seed)?;
                rows.extend(build_preference_pairs(&q, &cands, &discs, c.alignment.loss.min_relevance_gap));
            }
            write_preferences(&out, &v, &rows)?;
            println!("{} preference pairs", rows.len());
        }
        AlignCmd::Train { ckpt_in, prefs, vocab, ckpt_out, beta_w, beta_l, w_rel, w_au, w_val, epochs, lr, objective, seed } => {
            let v = read_vocab(&vocab)?;
            let reference = load_policy(&ckpt_in)?;
            let triples = read_preferences(&prefs, &v)?;
            let mut cfg = RunConfig::default().alignment.loss;
            (cfg.beta_w, cfg.beta_l, cfg.w_rel, cfg.w_au, cfg.w_val) = (beta_w, beta_l, w_rel, w_au, w_val);
            (cfg.train.epochs, cfg.train.lr, cfg.train.seed) = (epochs, lr, seed);
            let obj = match objective {
                ObjectiveArg::Modpo => Objective::MultiObjective,
                ObjectiveArg::Dpo => Objective::Dpo { beta: beta_w },
            };
            let (m, curve) = train_alignment(&reference, &triples, &cfg, obj)?;
            m.to_checkpoint().save(&ckpt_out)?;
            print_curve(&curve);
        }
    }
    Ok(())
}

fn eval_cmd(cmd: EvalCmd) -> Result<()> {
    match cmd {
        EvalCmd::Run { ckpt, corpus, out, name, limit, trie, config } => {
            let c = config.load()?;
            let (corp, wm) = Corpus::load_dir(&corpus)?;
            let golden = read_golden(&corpus.join("golden.tsv"), &corp.world.vocab)?;
            let mut queries: Vec<Text> = golden.keys().cloned().collect();
            if limit > 0 {
                queries.truncate(limit);
            }
            let m = load_policy(&ckpt)?;
            let th = wm.config.datasets.authenticity_threshold;
            let t = if trie { Some(authentic_trie(&corp.world, &corp.logs, th)?) } else { None };
            let generated = generate_all(&m, &queries, &c.decode, t.as_ref())?;
            let freqs = search_frequencies(&corp.logs);
            let fp = m.to_checkpoint().sha256()[..16].to_string();
            let report = score_generated(&name, &generated, &golden, &corp.world, &freqs, th, wm.seed, &fp)?;
            append_csv(&out, std::slice::from_ref(&report))?;
            for (k, v) in report.metrics() {
                println!("{k}\t{}", fmt_f64(v));
            }
        }
        EvalCmd::Ablate { config, arms, out } => {
            let mut c = config.load()?;
            c.eval.arms = arms;
            if let Some(o) = out {
                c.output_dir = o;
            }
            let m = run(&c, &[Stage::Align, Stage::Eval])?;
            println!("{}", m.to_toml()?);
        }
    }
    Ok(())
}

fn serve_cmd(cmd: ServeCmd) -> Result<()> {
    let (serve, ckpts) = match &cmd {
        ServeCmd::Replay { serve, arm_a, arm_b, .. } => (serve, vec![arm_a.clone(), arm_b.clone()]),
        ServeCmd::Listen { serve, ckpt, .. } => (serve, vec![ckpt.clone()]),
    };
    let c = serve.config.load()?;
    let (corpus, _) = Corpus::load_dir(&serve.corpus)?;
    let relevance = load_discs(&serve.disc_dir)?.relevance;
    let index = InvertedIndex::build(&corpus.world);
    let sc = mobgm::serving::ServingConfig { seed: derive_seed(c.seed, "serving"), ..c.serving.clone() };
    let heads = head_queries(&corpus, sc.cache_queries);
    let models = ckpts.iter().map(|p| load_policy(p)).collect::<Result<Vec<_>>>()?;
    let systems = models
        .iter()
        .map(|m| {
            let cache = precompute_cache(m, &heads, &c.decode, sc.bidwords_per_query, sc.sample_retries, sc.seed)?;
            Ok(ServingSystem {
                world: &corpus.world,
                model: m,
                relevance: &relevance,
                cache,
                index: &index,
                decode: c.decode,
                config: sc.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    match cmd {
        ServeCmd::Replay { traffic, out, .. } => {
            let stream = read_queries(&traffic, &corpus.world.vocab)?;
            let r = replay_traffic(&systems[0], &systems[1], &stream, &c.corpus.clicks, sc.seed)?;
            std::fs::write(&out, r.to_csv())?;
            print!("{}", r.to_csv());
        }
        ServeCmd::Listen { port, .. } => match port {
            Some(p) => {
                let listener = TcpListener::bind(("127.0.0.1", p))?;
                info!("listening on 127.0.0.1:{p}");
                for stream in listener.incoming() {
                    let stream = stream?;
                    listen(&systems[0], BufReader::new(stream.try_clone()?), stream)?;
                }
            }
            None => listen(&systems[0], std::io::stdin().lock(), std::io::stdout().lock())?,
        },
    }
    Ok(())
}

fn main_inner() -> Result<()> {
    match Cli::parse().command {
        Command::Corpus(c) => corpus_cmd(c),
        Command::Disc(c) => disc_cmd(c),
        Command::Policy(c) => policy_cmd(c),
        Command::Align(c) => align_cmd(c),
        Command::Eval(c) => eval_cmd(c),
        Command::Serve(c) => serve_cmd(c),
        Command::Run { config, stages, out } => {
            let mut c = ConfigArg { config }.load()?;
            if let Some(o) = out {
                c.output_dir = o;
            }
            let m = run(&c, &Stage::parse_list(&stages)?)?;
            println!("{}", m.to_toml()?);
            Ok(())
        }
        Command::Report { out, runs } => emit_report(&runs, &out),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = main_inner() {
        eprintln!("error: {e}");
        let mut src = std::error::Error::source(&e);
        while let Some(s) = src {
            eprintln!("  caused by: {s}");
            src = s.source();
        }
        std::process::exit(1);
    }
}

