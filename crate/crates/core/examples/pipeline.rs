//! Runs every stage at smoke scale, resumes the run (nothing is redone) and
//! prints the ablation table in long form.
//!
//!     cargo run --example pipeline -- [out_dir]

use std::path::PathBuf;

use mobgm::pipeline::{emit_report, resume, run, RunConfig, Stage};

fn main() -> mobgm::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("mobgm-pipeline"), Into::into);
    let mut config = RunConfig::smoke();
    config.output_dir = out.clone();
    let manifest = run(&config, &Stage::ALL)?;
    for s in &manifest.stages {
        println!("{:<7} {} artifacts", s.stage.name(), s.artifacts.len());
    }
    assert_eq!(resume(&config, &Stage::ALL)?, manifest);

    let report = out.join("report.csv");
    emit_report(&[out.clone()], &report)?;
    for line in std::fs::read_to_string(&report)?.lines().filter(|l| l.contains("relevance_rate") || l.starts_with("seed")) {
        println!("{line}");
    }
    Ok(())
}
