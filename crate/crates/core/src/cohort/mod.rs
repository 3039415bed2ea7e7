//! Training scenarios.
//!
//! - `single`: one branch on the raw ranking loss.
//! - `oas`: a frozen pre-trained anchor guides a target trained from scratch.
//! - `oss`: `M` branches trained together on the same batches; branch 0 uses the
//!   raw loss only, branch `m` adds the mean of its boosting losses against
//!   branches `0..m`. The last branch is the evaluated target.
//! - `mss`: the anchor starts as a copy of the target and follows it by EMA,
//!   `θ_a ← β θ_a + (1 − β) θ_t`, with `β` on a half-cosine ramp to 1. The
//!   update after step `s` (0-based) uses `β(s)`.
//!
//! Anchor scores always enter boosting losses as constants. All branches use Adam
//! (0.9 / 0.999 / 1e-8) and a step learning-rate decay. Every epoch the target is
//! scored on the validation split and the best-RSUM parameters are kept.
//!
//! Seeds: the target branch is initialised from sub-seed `"init/target"` in every
//! scenario, other branches from `"init/branch/{m}"`, and epoch `e`'s batches from
//! `"batches"` then `"epoch/{e}"`, so one master seed gives comparable runs.

mod optim;
mod schedule;
mod train;

pub use optim::{ema_update, optimizer_step, AdamConfig, AdamState, Branch, Role};
pub use schedule::{beta_at, lr_at, BetaSchedule};
pub use train::{
    evaluate_split, train, train_mss, train_mss_traced, train_oas, train_oss, train_single, EpochRecord,
    Experiment, History, Scenario, StepRecord, StepView, TrainConfig, TrainError, TrainOutcome, TrainResult,
};
