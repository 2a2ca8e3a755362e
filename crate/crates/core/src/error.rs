use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged in {stage}: loss {loss} exceeds {limit}")]
    Divergence { stage: String, loss: f64, limit: f64 },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("parse error in {file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("unknown ablation arm `{0}`")]
    UnknownArm(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("missing input for stage `{stage}`: {path}")]
    MissingInput { stage: String, path: PathBuf },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
