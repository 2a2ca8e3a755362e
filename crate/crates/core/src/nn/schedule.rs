use serde::{Deserialize, Serialize};

/// Linear warmup followed by cosine decay to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

/// Learning rate at `step`; steps past `total_steps` get zero.
pub fn lr_at(step: u64, config: &ScheduleConfig) -> f64 {
    let ScheduleConfig { base_lr, warmup_steps, total_steps } = *config;
    if step < warmup_steps {
        return base_lr * step as f64 / warmup_steps as f64;
    }
    if step >= total_steps {
        return if total_steps == warmup_steps { base_lr } else { 0.0 };
    }
    let progress = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}
