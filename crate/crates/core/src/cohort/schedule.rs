use serde::{Deserialize, Serialize};

/// Half-cosine ramp of the EMA coefficient from `beta0` at step 0 to 1 at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub beta0: f64,
    pub total_steps: usize,
}

impl BetaSchedule {
    pub const DEFAULT_BETA0: f64 = 0.99995;

    pub fn new(total_steps: usize) -> Self {
        BetaSchedule {
            beta0: Self::DEFAULT_BETA0,
            total_steps,
        }
    }
}

/// `1 − (1 − β0)(cos(π s / S) + 1) / 2`; `step >= S` gives 1.
pub fn beta_at(schedule: &BetaSchedule, step: usize) -> f64 {
    if step == 0 {
        return schedule.beta0;
    }
    if step >= schedule.total_steps {
        return 1.0;
    }
    let frac = step as f64 / schedule.total_steps as f64;
    let ramp = ((std::f64::consts::PI * frac).cos() + 1.0) / 2.0;
    1.0 - (1.0 - schedule.beta0) * ramp
}

/// Step learning rate: `lr` before `decay_epoch`, `lr * factor` from it on.
pub fn lr_at(lr: f64, epoch: usize, decay_epoch: Option<usize>, factor: f64) -> f64 {
    match decay_epoch {
        Some(d) if epoch >= d => lr * factor,
        _ => lr,
    }
}
