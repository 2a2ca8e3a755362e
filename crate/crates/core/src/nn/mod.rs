//! Numeric substrate: parameter tensors with exact gradients, the
//! forward/backward primitives the models are built from, AdamW, the
//! warmup-cosine learning-rate schedule, finite-difference gradient checks
//! and the binary checkpoint format.

mod adamw;
mod checkpoint;
mod gradcheck;
pub mod ops;
mod schedule;
mod tensor;
mod train;

pub use adamw::{AdamW, AdamWConfig};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, relative_error, GRAD_CHECK_FLOOR};
pub use schedule::{lr_at, ScheduleConfig};
pub use tensor::{ParamTensor, Parameters};
pub use train::{fit, TrainConfig, DIVERGENCE_FACTOR};
