use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::{ema_update, optimizer_step, AdamConfig, Branch, Role};
use super::schedule::{beta_at, lr_at, BetaSchedule};
use crate::data::{epoch_batches, PairDataset, Split};
use crate::encoders::{build_scores, score_batch, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::eval::{report_with, MdMode, RetrievalReport};
use crate::losses::{build_objective, BoostVariant, LossSettings, Objective, RawLoss, SimilarityBatch};
use crate::numcore::{derive_seed, Graph, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Single,
    Oas,
    Oss,
    Mss,
}

fn d_branches() -> usize {
    2
}
fn d_epochs() -> usize {
    40
}
fn d_batch() -> usize {
    32
}
fn d_lr() -> f64 {
    2e-4
}
fn d_decay_epoch() -> Option<usize> {
    Some(30)
}
fn d_decay_factor() -> f64 {
    0.1
}
fn d_beta0() -> f64 {
    BetaSchedule::DEFAULT_BETA0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub scenario: Scenario,
    /// Boosting objective for target branches; `None` trains on the raw loss only.
    #[serde(default)]
    pub variant: Option<BoostVariant>,
    #[serde(default)]
    pub raw_loss: RawLoss,
    /// Number of branches `M` (oss only).
    #[serde(default = "d_branches")]
    pub branches: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_decay_epoch")]
    pub decay_epoch: Option<usize>,
    #[serde(default = "d_decay_factor")]
    pub decay_factor: f64,
    #[serde(default = "d_beta0")]
    pub beta0: f64,
    /// Checkpoint of the pre-trained anchor (oas only).
    #[serde(default)]
    pub anchor: Option<std::path::PathBuf>,
    /// Extra seeds to train alongside the master seed.
    #[serde(default)]
    pub sweep_seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scenario: Scenario::default(),
            variant: None,
            raw_loss: RawLoss::default(),
            branches: d_branches(),
            epochs: d_epochs(),
            batch_size: d_batch(),
            lr: d_lr(),
            decay_epoch: d_decay_epoch(),
            decay_factor: d_decay_factor(),
            beta0: d_beta0(),
            anchor: None,
            sweep_seeds: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenario == Scenario::Oss && self.branches < 2 {
            return Err(Error::Config(format!("train.branches must be >= 2 for oss, got {}", self.branches)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!("train.batch_size must be >= 2, got {}", self.batch_size)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("train.lr must be > 0, got {}", self.lr)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return Err(Error::Config("train.decay_factor must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.beta0) {
            return Err(Error::Config(format!("train.beta0 must lie in [0, 1], got {}", self.beta0)));
        }
        Ok(())
    }
}

/// Everything a training run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub loss: LossSettings,
    pub md_mode: MdMode,
    pub adam: AdamConfig,
}

impl Experiment {
    pub fn new(seed: u64, encoder: EncoderConfig, train: TrainConfig, loss: LossSettings) -> Self {
        Experiment {
            seed,
            encoder,
            train,
            loss,
            md_mode: MdMode::default(),
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.train.validate()?;
        self.loss.margin.validate()?;
        self.loss.soft.validate()
    }

    /// Initialisation seed of the evaluated target branch. Shared by every
    /// scenario so that runs with one master seed start from the same target.
    pub fn target_init_seed(&self) -> u64 {
        derive_seed(self.seed, "init/target")
    }

    /// Initialisation seed of non-target branch `m` (OSS anchor is `m = 0`).
    pub fn branch_init_seed(&self, m: usize) -> u64 {
        derive_seed(self.seed, &format!("init/branch/{m}"))
    }
}

/// Target-branch losses for one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss_raw: f64,
    pub loss_boo: f64,
    pub total: f64,
}

/// One JSON-lines entry per epoch: validation metrics of the target and its mean losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub r1_i2t: f64,
    pub r5_i2t: f64,
    pub r10_i2t: f64,
    pub r1_t2i: f64,
    pub r5_t2i: f64,
    pub r10_t2i: f64,
    pub rsum: f64,
    pub md: f64,
    pub loss_raw: f64,
    pub loss_boo: f64,
}

impl EpochRecord {
    fn new(epoch: usize, split: Split, r: &RetrievalReport, loss_raw: f64, loss_boo: f64) -> Self {
        EpochRecord {
            epoch,
            split,
            r1_i2t: r.r1_i2t,
            r5_i2t: r.r5_i2t,
            r10_i2t: r.r10_i2t,
            r1_t2i: r.r1_t2i,
            r5_t2i: r.r5_t2i,
            r10_t2i: r.r10_t2i,
            rsum: r.rsum,
            md: r.md,
            loss_raw,
            loss_boo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
}

impl History {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("plain record"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    /// Epoch with the highest validation RSUM; the earliest wins ties.
    pub fn best_epoch(&self) -> Option<usize> {
        let mut best: Option<&EpochRecord> = None;
        for e in &self.epochs {
            if best.is_none_or(|b| e.rsum > b.rsum) {
                best = Some(e);
            }
        }
        best.map(|e| e.epoch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Target parameters at the best validation epoch (initial parameters if no epoch ran).
    pub best: EncoderParams,
    pub best_epoch: Option<usize>,
    pub history: History,
    /// Every branch at the end of training; the target is last.
    pub branches: Vec<Branch>,
}

impl TrainOutcome {
    pub fn target(&self) -> &Branch {
        self.branches.last().expect("at least one branch")
    }
}

/// A failed run, with whatever history was recorded before the failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error}")]
pub struct TrainError {
    pub error: Error,
    pub history: History,
}

impl From<Error> for TrainError {
    fn from(error: Error) -> Self {
        TrainError {
            error,
            history: History::default(),
        }
    }
}

pub type TrainResult = std::result::Result<TrainOutcome, TrainError>;

/// State after each optimisation step, for tracing.
pub struct StepView<'a> {
    pub step: usize,
    pub branches: &'a [Branch],
}

/// Where a branch's anchor scores come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Guide {
    /// Raw loss only.
    None,
    /// Boosted by every earlier branch, losses averaged.
    Earlier,
}

struct Plan {
    branches: Vec<Branch>,
    /// Parallel to `branches`: whether the optimiser updates it and how it is guided.
    trainable: Vec<bool>,
    guides: Vec<Guide>,
    ema: bool,
}

pub fn train_single(exp: &Experiment, data: &PairDataset) -> TrainResult {
    let target = EncoderParams::init(&exp.encoder, exp.target_init_seed())?;
    run(
        exp,
        data,
        Plan {
            branches: vec![Branch::new(target, Role::Target)],
            trainable: vec![true],
            guides: vec![Guide::None],
            ema: false,
        },
        &mut |_| {},
    )
}

/// Frozen pre-trained anchor, target trained from scratch with raw + boosting loss.
pub fn train_oas(exp: &Experiment, data: &PairDataset, anchor: &EncoderParams) -> TrainResult {
    if anchor.config != exp.encoder {
        return Err(Error::shape("train_oas", "anchor checkpoint does not match the encoder config").into());
    }
    let target = EncoderParams::init(&exp.encoder, exp.target_init_seed())?;
    run(
        exp,
        data,
        Plan {
            branches: vec![
                Branch::new(anchor.clone(), Role::Anchor),
                Branch::new(target, Role::Target),
            ],
            trainable: vec![false, true],
            guides: vec![Guide::None, Guide::Earlier],
            ema: false,
        },
        &mut |_| {},
    )
}

/// `M` branches trained jointly on shared batches; branch `m` is boosted by the
/// mean of its boosting losses against branches `0..m`.
pub fn train_oss(exp: &Experiment, data: &PairDataset) -> TrainResult {
    let m = exp.train.branches;
    if m < 2 {
        return Err(Error::Config(format!("oss needs at least 2 branches, got {m}")).into());
    }
    let mut branches = Vec::with_capacity(m);
    for b in 0..m {
        let (seed, role) = match b {
            0 => (exp.branch_init_seed(0), Role::Anchor),
            b if b == m - 1 => (exp.target_init_seed(), Role::Target),
            b => (exp.branch_init_seed(b), Role::Cohort(b)),
        };
        branches.push(Branch::new(EncoderParams::init(&exp.encoder, seed)?, role));
    }
    let mut guides = vec![Guide::Earlier; m];
    guides[0] = Guide::None;
    run(
        exp,
        data,
        Plan {
            branches,
            trainable: vec![true; m],
            guides,
            ema: false,
        },
        &mut |_| {},
    )
}

pub fn train_mss(exp: &Experiment, data: &PairDataset) -> TrainResult {
    train_mss_traced(exp, data, &mut |_| {})
}

/// [`train_mss`] with a callback after every step (anchor first, target second).
pub fn train_mss_traced(exp: &Experiment, data: &PairDataset, observe: &mut dyn FnMut(&StepView)) -> TrainResult {
    let target = EncoderParams::init(&exp.encoder, exp.target_init_seed())?;
    run(
        exp,
        data,
        Plan {
            branches: vec![
                Branch::new(target.clone(), Role::Anchor),
                Branch::new(target, Role::Target),
            ],
            trainable: vec![false, true],
            guides: vec![Guide::None, Guide::Earlier],
            ema: true,
        },
        observe,
    )
}

/// Dispatch on `exp.train.scenario`. `anchor` is required for oas.
pub fn train(exp: &Experiment, data: &PairDataset, anchor: Option<&EncoderParams>) -> TrainResult {
    match exp.train.scenario {
        Scenario::Single => train_single(exp, data),
        Scenario::Oas => match anchor {
            Some(a) => train_oas(exp, data, a),
            None => Err(Error::Config("oas needs an anchor checkpoint".into()).into()),
        },
        Scenario::Oss => train_oss(exp, data),
        Scenario::Mss => train_mss(exp, data),
    }
}

/// Validation report of `params` on `split`.
pub fn evaluate_split(params: &EncoderParams, data: &PairDataset, split: Split, md: MdMode) -> Result<RetrievalReport> {
    let gallery = data.gallery(split)?;
    let input = data.input(&gallery.images, &gallery.captions, params.config.mode);
    let scores = score_batch(params, &input)?;
    report_with(&scores, &gallery.truth, md)
}

fn clamp_scores(m: &Matrix) -> Matrix {
    m.map(|v| v.clamp(-1.0, 1.0))
}

struct StepLoss {
    raw: f64,
    boost: f64,
    total: f64,
}

fn diverged(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { .. } | Error::Numeric(_) => Error::Diverged {
            step,
            detail: e.to_string(),
        },
        other => other,
    }
}

fn run(exp: &Experiment, data: &PairDataset, mut plan: Plan, observe: &mut dyn FnMut(&StepView)) -> TrainResult {
    exp.validate()?;
    let cfg = &exp.train;
    if (data.spec.image_dim, data.spec.text_dim) != (exp.encoder.image_dim, exp.encoder.text_dim) {
        return Err(Error::shape("train", "dataset feature widths do not match the encoder").into());
    }
    let target_idx = plan.branches.len() - 1;
    let mut history = History::default();
    let mut best = plan.branches[target_idx].params.clone();
    let mut best_rsum = f64::NEG_INFINITY;
    let mut best_epoch = None;

    let steps_per_epoch = if cfg.epochs > 0 {
        epoch_batches(data, cfg.batch_size, exp.seed, 0)?.len()
    } else {
        0
    };
    let schedule = BetaSchedule {
        beta0: cfg.beta0,
        total_steps: steps_per_epoch * cfg.epochs,
    };

    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let lr = lr_at(cfg.lr, epoch, cfg.decay_epoch, cfg.decay_factor);
        let batches = epoch_batches(data, cfg.batch_size, exp.seed, epoch)?;
        let (mut raw_sum, mut boo_sum) = (0.0, 0.0);
        for batch in &batches {
            let input = data.batch_input(batch, exp.encoder.mode);
            let losses = match train_step(exp, &mut plan, &input, lr) {
                Ok(l) => l,
                Err(e) => {
                    return Err(TrainError {
                        error: diverged(step, e),
                        history,
                    })
                }
            };
            if plan.ema {
                let beta = beta_at(&schedule, step);
                let (anchor, rest) = plan.branches.split_at_mut(1);
                ema_update(&mut anchor[0].params, &rest[rest.len() - 1].params, beta)?;
            }
            let rec = StepRecord {
                step,
                epoch,
                loss_raw: losses.raw,
                loss_boo: losses.boost,
                total: losses.total,
            };
            if !rec.total.is_finite() {
                return Err(TrainError {
                    error: Error::Diverged {
                        step,
                        detail: "non-finite loss".into(),
                    },
                    history,
                });
            }
            raw_sum += rec.loss_raw;
            boo_sum += rec.loss_boo;
            history.steps.push(rec);
            observe(&StepView {
                step,
                branches: &plan.branches,
            });
            step += 1;
        }
        let target = &plan.branches[target_idx].params;
        let report = evaluate_split(target, data, Split::Val, exp.md_mode)?;
        let n = batches.len().max(1) as f64;
        history
            .epochs
            .push(EpochRecord::new(epoch, Split::Val, &report, raw_sum / n, boo_sum / n));
        if report.rsum > best_rsum {
            best_rsum = report.rsum;
            best = target.clone();
            best_epoch = Some(epoch);
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
        branches: plan.branches,
    })
}

/// Forward every branch on the batch, then update the trainable ones. Returns the target's losses.
fn train_step(exp: &Experiment, plan: &mut Plan, input: &crate::encoders::EncoderInput, lr: f64) -> Result<StepLoss> {
    let n = plan.branches.len();
    let mut graphs = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for b in &plan.branches {
        let binds = b.params.bindings();
        let mut g = Graph::new();
        let s = build_scores(&mut g, &exp.encoder, input)?;
        let eval = g.forward(&binds)?;
        scores.push(eval.value(s).clone());
        graphs.push((g, s, eval, binds));
    }

    let mut target_loss = None;
    let mut grads_per_branch = Vec::with_capacity(n);
    for (k, (g, s, eval, binds)) in graphs.iter_mut().enumerate() {
        if !plan.trainable[k] && k != n - 1 {
            grads_per_branch.push(None);
            continue;
        }
        let own = clamp_scores(&scores[k]);
        let raw_batch = SimilarityBatch::target_only(own.clone())?;
        let raw = build_objective(g, *s, None, &raw_batch, Objective::Raw(exp.train.raw_loss), &exp.loss)?;
        let boost = match (plan.guides[k], exp.train.variant) {
            (Guide::Earlier, Some(v)) if k > 0 => {
                let mut parts = Vec::with_capacity(k);
                for anchor in &scores[..k] {
                    let batch = SimilarityBatch::paired(own.clone(), clamp_scores(anchor))?;
                    parts.push(build_objective(g, *s, None, &batch, Objective::Boost(v), &exp.loss)?);
                }
                let mut acc = parts[0];
                for &p in &parts[1..] {
                    acc = g.add(acc, p);
                }
                Some(g.scale(acc, 1.0 / k as f64))
            }
            _ => None,
        };
        let root = match boost {
            Some(b) => g.add(raw, b),
            None => raw,
        };
        eval.extend(g, binds)?;
        if k == n - 1 {
            target_loss = Some(StepLoss {
                raw: eval.value(raw)[(0, 0)],
                boost: boost.map_or(0.0, |b| eval.value(b)[(0, 0)]),
                total: eval.value(root)[(0, 0)],
            });
        }
        grads_per_branch.push(if plan.trainable[k] {
            Some(g.backward(eval, root)?)
        } else {
            None
        });
    }
    for (k, grads) in grads_per_branch.into_iter().enumerate() {
        if let Some(grads) = grads {
            optimizer_step(&mut plan.branches[k], &grads, lr, &exp.adam)?;
        }
    }
    Ok(target_loss.expect("target is always evaluated"))
}
