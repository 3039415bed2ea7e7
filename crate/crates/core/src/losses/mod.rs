//! Matching and boosting objectives over a batch similarity matrix.
//!
//! Row `i` of a [`SimilarityBatch`] is image `i`, column `c` is caption `c`, and the
//! diagonal holds the positive pairs. Every objective is a sum over positives of
//! hinge terms in both retrieval directions (image→caption along the row, and
//! caption→image down the column):
//!
//! | objective | negatives | hinge argument per (positive, negative) |
//! |-----------|-----------|------------------------------------------|
//! | `Sum` | all | `γ + S_neg − S_pos` |
//! | `Max` | self-mined | `γ + S_neg − S_pos` |
//! | `Rs` | all | `γ + (A_pos − A_neg) − (S_pos − S_neg)` |
//! | `Rm` | diff-mined | as `Rs` |
//! | `As` | all | `[γ1 + A_pos − S_pos]+ + [γ2 + S_neg − A_neg]+` |
//! | `Am` | diff-mined | as `As` |
//! | `RmSoft` | diff-mined | `Rm` with `γ` → `γ^SA(A_pos − A_neg)` |
//! | `AmSoft` | diff-mined | `Am` with `γ1` → `γ1^SA(A_pos)`, `γ2` → `γ2^SA(A_neg)` |
//!
//! `S` is the target branch and `A` the anchor. The anchor enters through a
//! `detach` node, so no gradient ever reaches it from a boosting loss.
//!
//! The absolute objectives repeat the positive-pair term inside every negative's
//! summand, once per direction, exactly as the sums are written; `As` therefore
//! counts each positive term `2(N-1)` times and `Am` twice.

mod margin;
mod mining;

use serde::{Deserialize, Serialize};

pub use margin::{gamma_sa, gamma_sa_unclamped, margin_deficit, MarginConfig, MarginKind, SoftMarginConfig};
pub use mining::{mine_hardest_diff, mine_hardest_self, mining_margin, MinedNegatives};

use crate::error::{Error, Result};
use crate::numcore::{Bindings, Graph, Matrix, NodeId};

/// Target similarities plus, for boosting objectives, the anchor's.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBatch {
    pub target: Matrix,
    pub anchor: Option<Matrix>,
}

/// Slack allowed on the `[-1, 1]` bound for rounding in upstream normalisation.
const BOUND_SLACK: f64 = 1e-9;

impl SimilarityBatch {
    pub fn new(target: Matrix, anchor: Option<Matrix>) -> Result<Self> {
        check_scores(&target, "target")?;
        if let Some(a) = &anchor {
            check_scores(a, "anchor")?;
            if a.shape() != target.shape() {
                return Err(Error::shape("SimilarityBatch", "target and anchor shapes differ"));
            }
        }
        Ok(SimilarityBatch { target, anchor })
    }

    pub fn target_only(target: Matrix) -> Result<Self> {
        Self::new(target, None)
    }

    pub fn paired(target: Matrix, anchor: Matrix) -> Result<Self> {
        Self::new(target, Some(anchor))
    }

    pub fn size(&self) -> usize {
        self.target.rows()
    }

    fn anchor(&self) -> Result<&Matrix> {
        self.anchor
            .as_ref()
            .ok_or_else(|| Error::Config("boosting objective needs anchor scores".into()))
    }
}

fn check_scores(m: &Matrix, side: &str) -> Result<()> {
    if !m.is_square() || m.rows() == 0 {
        return Err(Error::shape(
            "SimilarityBatch",
            format!("{side} scores must be a non-empty square matrix"),
        ));
    }
    if m.data().iter().any(|v| !v.is_finite() || v.abs() > 1.0 + BOUND_SLACK) {
        return Err(Error::Numeric(format!("{side} scores must be finite and within [-1, 1]")));
    }
    Ok(())
}

/// Task-specific ranking loss trained on every branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawLoss {
    Sum,
    #[default]
    Max,
}

/// Boosting objective linking a target to an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostVariant {
    Rs,
    Rm,
    As,
    Am,
    RmSoft,
    AmSoft,
}

impl BoostVariant {
    pub const ALL: [BoostVariant; 6] = [
        BoostVariant::Rs,
        BoostVariant::Rm,
        BoostVariant::As,
        BoostVariant::Am,
        BoostVariant::RmSoft,
        BoostVariant::AmSoft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoostVariant::Rs => "rs",
            BoostVariant::Rm => "rm",
            BoostVariant::As => "as",
            BoostVariant::Am => "am",
            BoostVariant::RmSoft => "rm_soft",
            BoostVariant::AmSoft => "am_soft",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Raw(RawLoss),
    Boost(BoostVariant),
}

/// Everything an objective needs besides the scores.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossSettings {
    pub margin: MarginConfig,
    pub soft: SoftMarginConfig,
}

impl LossSettings {
    pub fn new(margin: MarginConfig) -> Self {
        LossSettings {
            margin,
            soft: SoftMarginConfig::default(),
        }
    }
}

/// Constant helpers sized to the batch.
struct Frame {
    n: usize,
    eye: NodeId,
    off: NodeId,
    ones_col: NodeId,
    ones_row: NodeId,
}

impl Frame {
    fn new(g: &mut Graph, n: usize) -> Self {
        let eye = Matrix::identity(n);
        let off = eye.map(|v| 1.0 - v);
        Frame {
            n,
            eye: g.constant(eye),
            off: g.constant(off),
            ones_col: g.constant(Matrix::filled(n, 1, 1.0)),
            ones_row: g.constant(Matrix::filled(1, n, 1.0)),
        }
    }

    /// `S_ii` as an `n x 1` column.
    fn diag_col(&self, g: &mut Graph, s: NodeId) -> NodeId {
        let d = g.mul(s, self.eye);
        g.row_sum(d)
    }

    /// `S_cc` as a `1 x n` row.
    fn diag_row(&self, g: &mut Graph, s: NodeId) -> NodeId {
        let d = g.mul(s, self.eye);
        g.col_sum(d)
    }

    /// Entry `(i, j)` = `S_ii`.
    fn diag_across_rows(&self, g: &mut Graph, s: NodeId) -> NodeId {
        let d = self.diag_col(g, s);
        g.matmul(d, self.ones_row)
    }

    /// Entry `(i, j)` = `S_jj`.
    fn diag_down_cols(&self, g: &mut Graph, s: NodeId) -> NodeId {
        let d = self.diag_row(g, s);
        g.matmul(self.ones_col, d)
    }

    /// Sum of `hinge(x)` over off-diagonal cells.
    fn off_diag_hinge_sum(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let h = g.hinge(x);
        let m = g.mul(h, self.off);
        g.sum(m)
    }

    fn hinge_sum(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let h = g.hinge(x);
        g.sum(h)
    }
}

/// One-hot selectors for mined negatives.
struct Selected {
    /// `(i, hardest_caption[i]) = 1`; select with a row sum.
    row_mask: NodeId,
    /// `(hardest_image[c], c) = 1`; select with a column sum.
    col_mask: NodeId,
}

impl Selected {
    fn new(g: &mut Graph, mined: &MinedNegatives) -> Self {
        let n = mined.hardest_caption.len();
        let mut r = Matrix::zeros(n, n);
        let mut c = Matrix::zeros(n, n);
        for i in 0..n {
            r[(i, mined.hardest_caption[i])] = 1.0;
            c[(mined.hardest_image[i], i)] = 1.0;
        }
        Selected {
            row_mask: g.constant(r),
            col_mask: g.constant(c),
        }
    }

    /// `S_{i, č_i}` as `n x 1`.
    fn row_neg(&self, g: &mut Graph, s: NodeId) -> NodeId {
        let m = g.mul(s, self.row_mask);
        g.row_sum(m)
    }

    /// `S_{ǐ_c, c}` as `1 x n`.
    fn col_neg(&self, g: &mut Graph, s: NodeId) -> NodeId {
        let m = g.mul(s, self.col_mask);
        g.col_sum(m)
    }
}

/// Appends `objective` to `g` and returns its scalar node.
///
/// `target` is the differentiable `N x N` score node and `values.target` its current
/// value (used for mining). For boosting objectives `anchor` is the anchor score
/// node; pass `None` to embed `values.anchor` as a constant. Either way it is
/// detached.
pub fn build_objective(
    g: &mut Graph,
    target: NodeId,
    anchor: Option<NodeId>,
    values: &SimilarityBatch,
    objective: Objective,
    settings: &LossSettings,
) -> Result<NodeId> {
    settings.margin.validate()?;
    let n = values.size();
    let needs_negatives = !matches!(
        objective,
        Objective::Boost(BoostVariant::Rs) | Objective::Boost(BoostVariant::As)
    );
    if needs_negatives && n < 2 {
        return Err(Error::shape(
            "loss",
            "need at least two pairs so that every positive has a negative",
        ));
    }
    let frame = Frame::new(g, n);
    let gamma = settings.margin.gamma;

    let boost = match objective {
        Objective::Raw(raw) => return Ok(build_raw(g, &frame, target, &values.target, raw, gamma)),
        Objective::Boost(v) => v,
    };

    let anchor_val = values.anchor()?;
    settings.soft.validate()?;
    let anchor_node = match anchor {
        Some(a) => a,
        None => g.constant(anchor_val.clone()),
    };
    let a = g.detach(anchor_node);
    let (g1, g2) = (settings.margin.gamma1(), settings.margin.gamma2());

    Ok(match boost {
        BoostVariant::Rs => {
            // row: γ + A_ii − A_ij − S_ii + S_ij ; col: γ + A_jj − A_ij − S_jj + S_ij
            let s_minus_a = g.sub(target, a);
            let da_r = frame.diag_across_rows(g, a);
            let ds_r = frame.diag_across_rows(g, target);
            let gap_r = g.sub(da_r, ds_r);
            let arg_r = g.add(gap_r, s_minus_a);
            let arg_r = g.affine(arg_r, 1.0, gamma);
            let row = frame.off_diag_hinge_sum(g, arg_r);

            let da_c = frame.diag_down_cols(g, a);
            let ds_c = frame.diag_down_cols(g, target);
            let gap_c = g.sub(da_c, ds_c);
            let arg_c = g.add(gap_c, s_minus_a);
            let arg_c = g.affine(arg_c, 1.0, gamma);
            let col = frame.off_diag_hinge_sum(g, arg_c);
            g.add(row, col)
        }
        BoostVariant::As => {
            let pos = positive_hinges(g, &frame, target, a, |_| g1, anchor_val);
            let pos_total = g.scale(pos, 2.0 * (n as f64 - 1.0));
            let s_minus_a = g.sub(target, a);
            let neg_arg = g.affine(s_minus_a, 1.0, g2);
            let neg = frame.off_diag_hinge_sum(g, neg_arg);
            let neg_total = g.scale(neg, 2.0);
            g.add(pos_total, neg_total)
        }
        BoostVariant::Rm | BoostVariant::RmSoft => {
            let mined = mine_hardest_diff(&values.target, anchor_val)?;
            let sel = Selected::new(g, &mined);
            let soft = boost == BoostVariant::RmSoft;

            let margin_col = margin_vector(n, |i| {
                let gap = anchor_val[(i, i)] - anchor_val[(i, mined.hardest_caption[i])];
                relative_margin(gap, soft, settings)
            }, true);
            let margin_row = margin_vector(n, |c| {
                let gap = anchor_val[(c, c)] - anchor_val[(mined.hardest_image[c], c)];
                relative_margin(gap, soft, settings)
            }, false);

            // image -> caption
            let a_pos = frame.diag_col(g, a);
            let a_neg = sel.row_neg(g, a);
            let s_pos = frame.diag_col(g, target);
            let s_neg = sel.row_neg(g, target);
            let a_gap = g.sub(a_pos, a_neg);
            let s_gap = g.sub(s_pos, s_neg);
            let d = g.sub(a_gap, s_gap);
            let m = g.constant(margin_col);
            let arg = g.add(m, d);
            let row = frame.hinge_sum(g, arg);

            // caption -> image
            let a_pos = frame.diag_row(g, a);
            let a_neg = sel.col_neg(g, a);
            let s_pos = frame.diag_row(g, target);
            let s_neg = sel.col_neg(g, target);
            let a_gap = g.sub(a_pos, a_neg);
            let s_gap = g.sub(s_pos, s_neg);
            let d = g.sub(a_gap, s_gap);
            let m = g.constant(margin_row);
            let arg = g.add(m, d);
            let col = frame.hinge_sum(g, arg);
            g.add(row, col)
        }
        BoostVariant::Am | BoostVariant::AmSoft => {
            let mined = mine_hardest_diff(&values.target, anchor_val)?;
            let sel = Selected::new(g, &mined);
            let soft = boost == BoostVariant::AmSoft;
            let m = settings.margin;
            let sm = settings.soft;

            let pos = positive_hinges(
                g,
                &frame,
                target,
                a,
                |score| {
                    if soft {
                        gamma_sa(score, MarginKind::AbsPos, &m, &sm)
                    } else {
                        g1
                    }
                },
                anchor_val,
            );
            let pos_total = g.scale(pos, 2.0);

            let neg_margin = |score: f64| {
                if soft {
                    gamma_sa(score, MarginKind::AbsNeg, &m, &sm)
                } else {
                    g2
                }
            };
            let margin_col = margin_vector(n, |i| neg_margin(anchor_val[(i, mined.hardest_caption[i])]), true);
            let margin_row = margin_vector(n, |c| neg_margin(anchor_val[(mined.hardest_image[c], c)]), false);

            let s_neg = sel.row_neg(g, target);
            let a_neg = sel.row_neg(g, a);
            let d = g.sub(s_neg, a_neg);
            let mc = g.constant(margin_col);
            let arg = g.add(mc, d);
            let row = frame.hinge_sum(g, arg);

            let s_neg = sel.col_neg(g, target);
            let a_neg = sel.col_neg(g, a);
            let d = g.sub(s_neg, a_neg);
            let mr = g.constant(margin_row);
            let arg = g.add(mr, d);
            let col = frame.hinge_sum(g, arg);

            let neg = g.add(row, col);
            g.add(pos_total, neg)
        }
    })
}

fn relative_margin(gap: f64, soft: bool, settings: &LossSettings) -> f64 {
    if soft {
        gamma_sa(gap, MarginKind::Relative, &settings.margin, &settings.soft)
    } else {
        settings.margin.gamma
    }
}

fn margin_vector(n: usize, f: impl Fn(usize) -> f64, column: bool) -> Matrix {
    if column {
        Matrix::from_fn(n, 1, |i, _| f(i))
    } else {
        Matrix::from_fn(1, n, |_, j| f(j))
    }
}

/// `Σ_i [m(A_ii) + A_ii − S_ii]+`, with the margin chosen per positive from the anchor score.
fn positive_hinges(
    g: &mut Graph,
    frame: &Frame,
    target: NodeId,
    anchor: NodeId,
    margin: impl Fn(f64) -> f64,
    anchor_val: &Matrix,
) -> NodeId {
    let margins = Matrix::from_fn(frame.n, 1, |i, _| margin(anchor_val[(i, i)]));
    let a_pos = frame.diag_col(g, anchor);
    let s_pos = frame.diag_col(g, target);
    let d = g.sub(a_pos, s_pos);
    let m = g.constant(margins);
    let arg = g.add(m, d);
    frame.hinge_sum(g, arg)
}

fn build_raw(
    g: &mut Graph,
    frame: &Frame,
    target: NodeId,
    target_val: &Matrix,
    raw: RawLoss,
    gamma: f64,
) -> NodeId {
    match raw {
        RawLoss::Sum => {
            let dr = frame.diag_across_rows(g, target);
            let arg_r = g.sub(target, dr);
            let arg_r = g.affine(arg_r, 1.0, gamma);
            let row = frame.off_diag_hinge_sum(g, arg_r);
            let dc = frame.diag_down_cols(g, target);
            let arg_c = g.sub(target, dc);
            let arg_c = g.affine(arg_c, 1.0, gamma);
            let col = frame.off_diag_hinge_sum(g, arg_c);
            g.add(row, col)
        }
        RawLoss::Max => {
            let mined = mine_hardest_self(target_val).expect("size checked by caller");
            let sel = Selected::new(g, &mined);
            let pos = frame.diag_col(g, target);
            let neg = sel.row_neg(g, target);
            let d = g.sub(neg, pos);
            let arg = g.affine(d, 1.0, gamma);
            let row = frame.hinge_sum(g, arg);
            let pos = frame.diag_row(g, target);
            let neg = sel.col_neg(g, target);
            let d = g.sub(neg, pos);
            let arg = g.affine(d, 1.0, gamma);
            let col = frame.hinge_sum(g, arg);
            g.add(row, col)
        }
    }
}

/// Name of the target leaf in graphs built by [`objective_graph`].
pub const TARGET_LEAF: &str = "target";
/// Name of the anchor leaf in graphs built by [`objective_graph`].
pub const ANCHOR_LEAF: &str = "anchor";

/// Standalone graph for `objective` with the target (and anchor, if present) as
/// parameter leaves. Returns the graph, its root and the matching bindings.
pub fn objective_graph(
    batch: &SimilarityBatch,
    objective: Objective,
    settings: &LossSettings,
) -> Result<(Graph, NodeId, Bindings)> {
    let mut g = Graph::new();
    let t = g.param(TARGET_LEAF);
    let mut binds = Bindings::new().with(TARGET_LEAF, batch.target.clone());
    let a = match (&batch.anchor, objective) {
        (Some(av), Objective::Boost(_)) => {
            binds.insert(ANCHOR_LEAF, av.clone());
            Some(g.param(ANCHOR_LEAF))
        }
        _ => None,
    };
    let root = build_objective(&mut g, t, a, batch, objective, settings)?;
    Ok((g, root, binds))
}

/// Value of `objective` on `batch`.
pub fn objective_value(batch: &SimilarityBatch, objective: Objective, settings: &LossSettings) -> Result<f64> {
    let (g, root, binds) = objective_graph(batch, objective, settings)?;
    Ok(g.forward(&binds)?.value(root)[(0, 0)])
}

/// Value and gradient with respect to the target scores.
pub fn objective_with_grad(
    batch: &SimilarityBatch,
    objective: Objective,
    settings: &LossSettings,
) -> Result<(f64, Matrix)> {
    let (g, root, binds) = objective_graph(batch, objective, settings)?;
    let eval = g.forward(&binds)?;
    let mut grads = g.backward(&eval, root)?;
    Ok((eval.value(root)[(0, 0)], grads.remove(TARGET_LEAF).expect("target leaf")))
}

pub fn loss_sum(batch: &SimilarityBatch, cfg: &MarginConfig) -> Result<f64> {
    objective_value(batch, Objective::Raw(RawLoss::Sum), &LossSettings::new(*cfg))
}

pub fn loss_max(batch: &SimilarityBatch, cfg: &MarginConfig) -> Result<f64> {
    objective_value(batch, Objective::Raw(RawLoss::Max), &LossSettings::new(*cfg))
}

pub fn loss_rs(batch: &SimilarityBatch, cfg: &MarginConfig) -> Result<f64> {
    objective_value(batch, Objective::Boost(BoostVariant::Rs), &LossSettings::new(*cfg))
}

pub fn loss_rm(batch: &SimilarityBatch, cfg: &MarginConfig) -> Result<f64> {
    objective_value(batch, Objective::Boost(BoostVariant::Rm), &LossSettings::new(*cfg))
}

pub fn loss_as(batch: &SimilarityBatch, cfg: &MarginConfig) -> Result<f64> {
    objective_value(batch, Objective::Boost(BoostVariant::As), &LossSettings::new(*cfg))
}

pub fn loss_am(batch: &SimilarityBatch, cfg: &MarginConfig) -> Result<f64> {
    objective_value(batch, Objective::Boost(BoostVariant::Am), &LossSettings::new(*cfg))
}

pub fn loss_rm_soft(batch: &SimilarityBatch, cfg: &MarginConfig, soft: &SoftMarginConfig) -> Result<f64> {
    let settings = LossSettings {
        margin: *cfg,
        soft: *soft,
    };
    objective_value(batch, Objective::Boost(BoostVariant::RmSoft), &settings)
}

pub fn loss_am_soft(batch: &SimilarityBatch, cfg: &MarginConfig, soft: &SoftMarginConfig) -> Result<f64> {
    let settings = LossSettings {
        margin: *cfg,
        soft: *soft,
    };
    objective_value(batch, Objective::Boost(BoostVariant::AmSoft), &settings)
}

/// Parts of the target objective `L_raw + L_boo`, weighted 1:1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetLoss {
    pub raw: f64,
    pub boost: f64,
    pub total: f64,
}

/// `L_raw(S_t) + L_boo(S_t, S_a)`. With `variant = None` the boosting part is 0.
pub fn total_target_loss(
    batch: &SimilarityBatch,
    settings: &LossSettings,
    raw: RawLoss,
    variant: Option<BoostVariant>,
) -> Result<TargetLoss> {
    let mut g = Graph::new();
    let t = g.param(TARGET_LEAF);
    let binds = Bindings::new().with(TARGET_LEAF, batch.target.clone());
    let raw_node = build_objective(&mut g, t, None, batch, Objective::Raw(raw), settings)?;
    let (root, boost_node) = match variant {
        Some(v) => {
            let b = build_objective(&mut g, t, None, batch, Objective::Boost(v), settings)?;
            (g.add(raw_node, b), Some(b))
        }
        None => (raw_node, None),
    };
    let eval = g.forward(&binds)?;
    Ok(TargetLoss {
        raw: eval.value(raw_node)[(0, 0)],
        boost: boost_node.map_or(0.0, |b| eval.value(b)[(0, 0)]),
        total: eval.value(root)[(0, 0)],
    })
}
