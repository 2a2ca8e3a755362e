//! Configuration, stage sequencing and run manifests.

mod config;
mod run;
mod stages;

pub use config::{AlignmentStage, EvalStage, PolicyStage, RunConfig, OUTPUT_ENV};
pub use stages::{ablation_config, ablation_inputs, run_ppt, run_sft, split_data, train_discriminators, DataSplits};
pub use run::{emit_report, head_queries, resume, run, Artifact, Manifest, Stage, StageRecord, MANIFEST_FILE, METRICS_FILE, TIMING_FILE};
