//! Offline evaluation: ranking metrics against the golden set, oracle
//! quality rates, business metrics and the ablation matrix.

mod ablation;
mod metrics;
mod report;

pub use ablation::{
    ablation_harness, authentic_trie, build_pairs, evaluate_arms, train_arms, AblationConfig, AblationInputs, AblationReport, Arm, ArmResult, DirectionalCheck, TrainedArm,
};
pub use metrics::{
    business_metrics, dcg, ndcg_at_k, ndcg_from_gains, quality_rates, recall_at_k, BusinessMetrics, QualityRates,
};
pub use report::{append_csv, generate_all, score_generated, MetricsReport, CUTOFFS};
