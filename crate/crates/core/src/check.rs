//! Property suite behind `boostlab check`.
//!
//! Every property draws its inputs from a sub-seed of one master seed, so a run
//! is reproducible line for line. The four loss functions under test are passed
//! in through [`LossSet`], which lets a caller swap in a deliberately broken
//! implementation and confirm that the suite notices.

use serde::Serialize;

use crate::cohort::{beta_at, ema_update, BetaSchedule};
use crate::data::GroundTruth;
use crate::encoders::{
    build_scores, cross_attend, score_batch, similarity_head, EncoderConfig, EncoderInput, EncoderMode,
    EncoderParams, PooledBatch, TokenBatch,
};
use crate::error::Result;
use crate::eval::{histogram, recall_at_k, report, Direction};
use crate::losses::{
    gamma_sa, gamma_sa_unclamped, loss_am, loss_as, loss_max, loss_rm, loss_rs, loss_sum, margin_deficit,
    mining_margin, objective_graph, BoostVariant, LossSettings, MarginConfig, MarginKind,
    Objective, RawLoss, SimilarityBatch, SoftMarginConfig, ANCHOR_LEAF, TARGET_LEAF,
};
use crate::numcore::{finite_diff_check, Bindings, Graph, Matrix, RngStream};

pub type LossFn = fn(&SimilarityBatch, &MarginConfig) -> Result<f64>;

#[derive(Debug, Clone, Copy)]
pub struct LossSet {
    pub rs: LossFn,
    pub rm: LossFn,
    pub as_: LossFn,
    pub am: LossFn,
}

impl Default for LossSet {
    fn default() -> Self {
        LossSet {
            rs: loss_rs,
            rm: loss_rm,
            as_: loss_as,
            am: loss_am,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Random batches for the ordering inequalities.
    pub fuzz_batches: usize,
    /// Random batches for the identity-anchor check.
    pub identity_batches: usize,
    /// Points on each soft-margin grid.
    pub grid_points: usize,
    /// Non-kink points per gradient check.
    pub gradient_points: usize,
    pub max_n: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 20240607,
            fuzz_batches: 10_000,
            identity_batches: 1_000,
            grid_points: 1_000,
            gradient_points: 100,
            max_n: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Property = fn(&SuiteConfig, &LossSet) -> std::result::Result<String, String>;

const PROPERTIES: &[(&str, Property)] = &[
    ("rm_le_am", rm_le_am),
    ("rs_le_as", rs_le_as),
    ("identity_anchor_exact", identity_anchor_exact),
    ("pair_batch_sum_equals_max", pair_batch_sum_equals_max),
    ("zero_anchor_reduces_to_max", zero_anchor_reduces_to_max),
    ("soft_margin_zero_at_extreme", soft_margin_zero_at_extreme),
    ("soft_margin_boundary_slope", soft_margin_boundary_slope),
    ("soft_margin_monotone_and_bounded", soft_margin_monotone_and_bounded),
    ("anchor_gradient_is_zero", anchor_gradient_is_zero),
    ("loss_gradients_match_differences", loss_gradients_match_differences),
    ("encoder_gradients_match_differences", encoder_gradients_match_differences),
    ("interaction_batch_matches_pairs", interaction_batch_matches_pairs),
    ("softmax_and_l2_rows", softmax_and_l2_rows),
    ("evaluation_is_deterministic", evaluation_is_deterministic),
    ("ema_is_convex", ema_is_convex),
    ("beta_schedule_endpoints", beta_schedule_endpoints),
    ("recall_monotone_and_rsum_exact", recall_monotone_and_rsum_exact),
    ("histogram_conserves_pairs", histogram_conserves_pairs),
];

pub fn property_names() -> Vec<&'static str> {
    PROPERTIES.iter().map(|(n, _)| *n).collect()
}

pub fn run_suite(cfg: &SuiteConfig, losses: &LossSet) -> Vec<PropertyOutcome> {
    PROPERTIES
        .iter()
        .map(|(name, prop)| {
            let (passed, detail) = match prop(cfg, losses) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            PropertyOutcome { name, passed, detail }
        })
        .collect()
}

fn rng(cfg: &SuiteConfig, label: &str) -> RngStream {
    RngStream::derive(cfg.seed, &format!("check/{label}"))
}

/// Square matrix with entries uniform in `[-bound, bound)`.
pub fn random_scores(rng: &mut RngStream, n: usize, bound: f64) -> Matrix {
    rng.uniform_matrix(n, n, -bound, bound)
}

fn random_pair(rng: &mut RngStream, max_n: usize) -> SimilarityBatch {
    let n = 2 + rng.below(max_n - 1);
    let t = random_scores(rng, n, 1.0);
    let a = random_scores(rng, n, 1.0);
    SimilarityBatch::paired(t, a).expect("in range")
}

fn e(r: Result<f64>) -> std::result::Result<f64, String> {
    r.map_err(|e| e.to_string())
}

fn ordering(cfg: &SuiteConfig, lo: LossFn, hi: LossFn, label: &str) -> std::result::Result<String, String> {
    let mut r = rng(cfg, label);
    let m = MarginConfig::default();
    let mut worst = f64::NEG_INFINITY;
    for k in 0..cfg.fuzz_batches {
        let b = random_pair(&mut r, cfg.max_n);
        let (a, c) = (e(lo(&b, &m))?, e(hi(&b, &m))?);
        worst = worst.max(a - c);
        if a > c + 1e-12 {
            return Err(format!("batch {k} (N={}): {a} > {c}", b.size()));
        }
    }
    Ok(format!("{} batches, max(lhs - rhs) = {worst:.3e}", cfg.fuzz_batches))
}

fn rm_le_am(cfg: &SuiteConfig, l: &LossSet) -> std::result::Result<String, String> {
    ordering(cfg, l.rm, l.am, "rm_le_am")
}

fn rs_le_as(cfg: &SuiteConfig, l: &LossSet) -> std::result::Result<String, String> {
    ordering(cfg, l.rs, l.as_, "rs_le_as")
}

fn identity_anchor_exact(cfg: &SuiteConfig, l: &LossSet) -> std::result::Result<String, String> {
    let mut r = rng(cfg, "identity");
    let m = MarginConfig::default();
    let mut worst = 0.0f64;
    for k in 0..cfg.identity_batches {
        let n = 2 + r.below(cfg.max_n - 1);
        let s = random_scores(&mut r, n, 1.0);
        let b = SimilarityBatch::paired(s.clone(), s).expect("in range");
        let want = 2.0 * m.gamma * n as f64;
        for v in [e((l.rm)(&b, &m))?, e((l.am)(&b, &m))?] {
            worst = worst.max((v - want).abs());
            if (v - want).abs() >= 1e-12 {
                return Err(format!("batch {k} (N={n}): {v} != {want}"));
            }
        }
    }
    Ok(format!("{} batches, max error {worst:.3e}", cfg.identity_batches))
}

fn pair_batch_sum_equals_max(cfg: &SuiteConfig, l: &LossSet) -> std::result::Result<String, String> {
    let mut r = rng(cfg, "pair");
    let m = MarginConfig::default();
    for _ in 0..200 {
        let t = random_scores(&mut r, 2, 1.0);
        let a = random_scores(&mut r, 2, 1.0);
        let b = SimilarityBatch::paired(t, a).expect("in range");
        let pairs = [
            (e(loss_sum(&b, &m))?, e(loss_max(&b, &m))?),
            (e((l.rs)(&b, &m))?, e((l.rm)(&b, &m))?),
            (e((l.as_)(&b, &m))?, e((l.am)(&b, &m))?),
        ];
        if let Some((x, y)) = pairs.iter().find(|(x, y)| (x - y).abs() > 1e-12) {
            return Err(format!("sum {x} != max {y}"));
        }
    }
    Ok("200 batches with N = 2".into())
}

fn zero_anchor_reduces_to_max(cfg: &SuiteConfig, l: &LossSet) -> std::result::Result<String, String> {
    let mut r = rng(cfg, "zero_anchor");
    let m = MarginConfig::default();
    for _ in 0..500 {
        let n = 2 + r.below(cfg.max_n - 1);
        let s = random_scores(&mut r, n, 1.0);
        let b = SimilarityBatch::paired(s.clone(), Matrix::zeros(n, n)).expect("in range");
        let (x, y) = (e((l.rm)(&b, &m))?, e(loss_max(&b, &m))?);
        if (x - y).abs() > 1e-12 {
            return Err(format!("N={n}: rm {x} != max {y}"));
        }
    }
    Ok("500 batches".into())
}

const SOFT: SoftMarginConfig = SoftMarginConfig { d_x: 2.0, d_y: 1.0 };

fn soft_margin_zero_at_extreme(_: &SuiteConfig, _: &LossSet) -> std::result::Result<String, String> {
    let m = MarginConfig::default();
    let rel = gamma_sa(SOFT.d_x, MarginKind::Relative, &m, &SOFT);
    let pos = gamma_sa(SOFT.d_y, MarginKind::AbsPos, &m, &SOFT);
    let neg = gamma_sa(-SOFT.d_y, MarginKind::AbsNeg, &m, &SOFT);
    if rel.abs() > 1e-12 || pos.abs() > 1e-12 || neg.abs() > 1e-12 {
        return Err(format!("relative {rel}, abs_pos {pos}, abs_neg {neg}"));
    }
    Ok(format!("relative {rel}, abs_pos {pos}, abs_neg {neg}"))
}

fn soft_margin_boundary_slope(_: &SuiteConfig, _: &LossSet) -> std::result::Result<String, String> {
    let m = MarginConfig::default();
    let h = 1e-6;
    let slope = |x: f64, k: MarginKind| {
        (gamma_sa_unclamped(x + h, k, &m, &SOFT) - gamma_sa_unclamped(x - h, k, &m, &SOFT)) / (2.0 * h)
    };
    let cases = [
        (SOFT.d_x, MarginKind::Relative, -1.0),
        (SOFT.d_y, MarginKind::AbsPos, -1.0),
        (-SOFT.d_y, MarginKind::AbsNeg, 1.0),
    ];
    let mut out = Vec::new();
    for (x, k, want) in cases {
        let s = slope(x, k);
        if (s - want).abs() > 1e-3 {
            return Err(format!("{k:?}: slope {s}, expected {want}"));
        }
        out.push(format!("{k:?} {s:.6}"));
    }
    Ok(out.join(", "))
}

/// Evenly spaced grid over `[lo, hi]` with `n >= 2` points.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn soft_margin_monotone_and_bounded(cfg: &SuiteConfig, _: &LossSet) -> std::result::Result<String, String> {
    let m = MarginConfig::default();
    for kind in [MarginKind::Relative, MarginKind::AbsPos, MarginKind::AbsNeg] {
        let (lo, hi) = kind.domain(&SOFT);
        let full = kind.full_margin(&m);
        let increasing = kind == MarginKind::AbsNeg;
        let mut prev: Option<f64> = None;
        for x in grid(lo, hi, cfg.grid_points) {
            let v = gamma_sa(x, kind, &m, &SOFT);
            if !(0.0..=full).contains(&v) || margin_deficit(x, kind, &m, &SOFT) <= 0.0 {
                return Err(format!("{kind:?}({x}) = {v} outside [0, {full})"));
            }
            if let Some(p) = prev {
                let ok = if increasing { v >= p } else { v <= p };
                if !ok {
                    return Err(format!("{kind:?} not monotone at {x}"));
                }
            }
            prev = Some(v);
        }
    }
    Ok(format!("3 kinds x {} points", cfg.grid_points))
}

pub const ALL_OBJECTIVES: [Objective; 8] = [
    Objective::Raw(RawLoss::Sum),
    Objective::Raw(RawLoss::Max),
    Objective::Boost(BoostVariant::Rs),
    Objective::Boost(BoostVariant::Rm),
    Objective::Boost(BoostVariant::As),
    Objective::Boost(BoostVariant::Am),
    Objective::Boost(BoostVariant::RmSoft),
    Objective::Boost(BoostVariant::AmSoft),
];

fn anchor_gradient_is_zero(cfg: &SuiteConfig, _: &LossSet) -> std::result::Result<String, String> {
    let mut r = rng(cfg, "anchor_grad");
    let settings = LossSettings::default();
    for _ in 0..100 {
        let b = random_pair(&mut r, 8);
        for v in BoostVariant::ALL {
            let (g, root, binds) = objective_graph(&b, Objective::Boost(v), &settings).map_err(|e| e.to_string())?;
            let eval = g.forward(&binds).map_err(|e| e.to_string())?;
            let grads = g.backward(&eval, root).map_err(|e| e.to_string())?;
            if grads[ANCHOR_LEAF].data().iter().any(|&x| x != 0.0) {
                return Err(format!("{v:?} leaks gradient into the anchor"));
            }
        }
    }
    Ok("6 variants x 100 batches".into())
}

/// A random batch for `objective` whose hinge inputs and mining gaps are all at
/// least `clearance` away from a kink.
pub fn non_kink_batch(
    rng: &mut RngStream,
    objective: Objective,
    settings: &LossSettings,
    clearance: f64,
) -> Result<SimilarityBatch> {
    loop {
        let n = 2 + rng.below(5);
        let t = random_scores(rng, n, 0.95);
        let a = random_scores(rng, n, 0.95);
        let b = SimilarityBatch::paired(t.clone(), a.clone())?;
        let mining = match objective {
            Objective::Raw(RawLoss::Max) => mining_margin(&t),
            Objective::Boost(BoostVariant::Rm | BoostVariant::Am | BoostVariant::RmSoft | BoostVariant::AmSoft) => {
                mining_margin(&t.zip_map(&a, |x, y| x - y)?)
            }
            _ => f64::INFINITY,
        };
        if mining < clearance {
            continue;
        }
        let (g, _, binds) = objective_graph(&b, objective, settings)?;
        let eval = g.forward(&binds)?;
        if g.min_hinge_input(&eval).unwrap_or(f64::INFINITY) >= clearance {
            return Ok(b);
        }
    }
}

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-5;

fn loss_gradients_match_differences(cfg: &SuiteConfig, _: &LossSet) -> std::result::Result<String, String> {
    let mut r = rng(cfg, "loss_fd");
    let settings = LossSettings::default();
    let mut worst = 0.0f64;
    for obj in ALL_OBJECTIVES {
        for _ in 0..cfg.gradient_points {
            let b = non_kink_batch(&mut r, obj, &settings, 1e3 * FD_STEP).map_err(|e| e.to_string())?;
            let (g, root, binds) = objective_graph(&b, obj, &settings).map_err(|e| e.to_string())?;
            let err = finite_diff_check(&g, root, &binds, &[TARGET_LEAF], FD_STEP).map_err(|e| e.to_string())?;
            worst = worst.max(err);
            if err >= FD_TOLERANCE {
                return Err(format!("{obj:?}: relative error {err:.3e}"));
            }
        }
    }
    Ok(format!("8 objectives x {} points, max error {worst:.3e}", cfg.gradient_points))
}

/// Small encoder configs used by the encoder checks.
pub fn small_encoder(mode: EncoderMode) -> EncoderConfig {
    EncoderConfig {
        mode,
        image_dim: 5,
        text_dim: 4,
        hidden: 3,
        align_dim: 3,
        lambda: 9.0,
    }
}

pub fn random_input(rng: &mut RngStream, cfg: &EncoderConfig, n: usize, tokens: usize) -> EncoderInput {
    match cfg.mode {
        EncoderMode::Pooled => EncoderInput::Pooled(PooledBatch {
            images: rng.normal_matrix(n, cfg.image_dim, 1.0),
            texts: rng.normal_matrix(n, cfg.text_dim, 1.0),
        }),
        EncoderMode::Interaction => EncoderInput::Tokens(TokenBatch {
            images: (0..n).map(|_| rng.normal_matrix(tokens, cfg.image_dim, 1.0)).collect(),
            texts: (0..n).map(|_| rng.normal_matrix(tokens, cfg.text_dim, 1.0)).collect(),
        }),
    }
}

/// Scalar probe `sum(scores ⊙ R)` over an encoder's score graph.
pub fn encoder_probe(
    cfg: &EncoderConfig,
    params: &EncoderParams,
    input: &EncoderInput,
    weights: Matrix,
) -> Result<(Graph, crate::numcore::NodeId, Bindings)> {
    let mut g = Graph::new();
    let s = build_scores(&mut g, cfg, input)?;
    let w = g.constant(weights);
    let p = g.mul(s, w);
    let root = g.sum(p);
    Ok((g, root, params.bindings()))
}

fn encoder_gradients_match_differences(cfg: &SuiteConfig, _: &LossSet) -> std::result::Result<String, String> {
    let mut r = rng(cfg, "encoder_fd");
    let mut worst = 0.0f64;
    for mode in [EncoderMode::Pooled, EncoderMode::Interaction] {
        let ec = small_encoder(mode);
        let mut done = 0;
        while done < cfg.gradient_points {
            let params = EncoderParams::init(&ec, r.next_u64()).map_err(|e| e.to_string())?;
            let n = 2 + r.below(2);
            let input = random_input(&mut r, &ec, n, 2);
            let weights = r.uniform_matrix(n, n, -1.0, 1.0);
            let (g, root, binds) = encoder_probe(&ec, &params, &input, weights).map_err(|e| e.to_string())?;
            let eval = g.forward(&binds).map_err(|e| e.to_string())?;
            if g.min_hinge_input(&eval).unwrap_or(f64::INFINITY) < 1e-3 {
                continue;
            }
            let names = params.names();
            let err = finite_diff_check(&g, root, &binds, &names, FD_STEP).map_err(|e| e.to_string())?;
            worst = worst.max(err);
            if err >= FD_TOLERANCE {
                return Err(format!("{mode:?}: relative error {err:.3e}"));
            }
            done += 1;
        }
    }
    Ok(format!("2 paths x {} points, max error {worst:.3e}", cfg.gradient_points))
}

fn interaction_batch_matches_pairs(cfg: &SuiteConfig, _: &LossSet) -> std::result::Result<String, String> {
    let mut r = rng(cfg, "pairs");
    let ec = small_encoder(EncoderMode::Interaction);
    let params = EncoderParams::init(&ec, r.next_u64()).map_err(|e| e.to_string())?;
    let input = random_input(&mut r, &ec, 4, 3);
    let s = score_batch(&params, &input).map_err(|e| e.to_string())?;
    let EncoderInput::Tokens(tb) = &input else { unreachable!() };
    let head = params.head.as_ref().expect("interaction head");
    for i in 0..4 {
        let v = params.image.apply(&tb.images[i]).map_err(|e| e.to_string())?;
        for j in 0..4 {
            let t = params.text.apply(&tb.texts[j]).map_err(|e| e.to_string())?;
            let att = cross_attend(&t, &v, ec.lambda).map_err(|e| e.to_string())?;
            let want = similarity_head(&t, &att, head).map_err(|e| e.to_string())?;
            if (s[(i, j)] - want).abs() > 1e-12 {
                return Err(format!("cell ({i}, {j}): {} vs {want}", s[(i, j)]));
            }
        }
    }
    Ok("4x4 cells".into())
}

fn softmax_and_l2_rows(cfg: &SuiteConfig, _: &LossSet) -> std::result::Result<String, String> {
    let mut r = rng(cfg, "rows");
    for _ in 0..100 {
        let rows = 1 + r.below(6);
        let cols = 1 + r.below(6);
        let mut x = r.normal_matrix(rows, cols, 3.0);
        x.row_mut(0).iter_mut().for_each(|v| *v = 0.0);
        let mut g = Graph::new();
        let p = g.param("x");
        let sm = g.row_softmax(p, 9.0);
        let nm = g.row_l2_norm(p);
        let eval = g.forward(&Bindings::new().with("x", x)).map_err(|e| e.to_string())?;
        let (s, n) = (eval.value(sm), eval.value(nm));
        for i in 0..rows {
            let total: f64 = s.row(i).iter().sum();
            if (total - 1.0).abs() > 1e-12 || s.row(i).iter().any(|&v| v < 0.0) {
                return Err(format!("softmax row {i} sums to {total}"));
            }
            let norm = n.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            let want = if i == 0 { 0.0 } else { 1.0 };
            if (norm - want).abs() > 1e-12 {
                return Err(format!("normalised row {i} has norm {norm}"));
            }
        }
    }
    Ok("100 random matrices".into())
}

fn evaluation_is_deterministic(cfg: &SuiteConfig, _: &LossSet) -> std::result::Result<String, String> {
    let run = || -> Result<(Vec<u64>, Vec<u64>)> {
        let mut r = rng(cfg, "determinism");
        let ec = small_encoder(EncoderMode::Interaction);
        let params = EncoderParams::init(&ec, 5)?;
        let input = random_input(&mut r, &ec, 3, 2);
        let w = r.uniform_matrix(3, 3, -1.0, 1.0);
        let (g, root, binds) = encoder_probe(&ec, &params, &input, w)?;
        let eval = g.forward(&binds)?;
        let grads = g.backward(&eval, root)?;
        let v = eval.value(root).data().iter().map(|x| x.to_bits()).collect();
        let gb = grads.values().flat_map(|m| m.data().iter().map(|x| x.to_bits())).collect();
        Ok((v, gb))
    };
    let a = run().map_err(|e| e.to_string())?;
    let b = run().map_err(|e| e.to_string())?;
    if a != b {
        return Err("repeated evaluation differs".into());
    }
    Ok("values and gradients bit-identical".into())
}

fn ema_is_convex(cfg: &SuiteConfig, _: &LossSet) -> std::result::Result<String, String> {
    let mut r = rng(cfg, "ema");
    let ec = small_encoder(EncoderMode::Interaction);
    for _ in 0..100 {
        let mut a = EncoderParams::init(&ec, r.next_u64()).map_err(|e| e.to_string())?;
        let t = EncoderParams::init(&ec, r.next_u64()).map_err(|e| e.to_string())?;
        let before = a.clone();
        let beta = r.uniform();
        ema_update(&mut a, &t, beta).map_err(|e| e.to_string())?;
        for (((_, x), (_, p)), (_, q)) in a.named().into_iter().zip(before.named()).zip(t.named()) {
            for k in 0..x.data().len() {
                let (lo, hi) = (p.data()[k].min(q.data()[k]), p.data()[k].max(q.data()[k]));
                if !(lo..=hi).contains(&x.data()[k]) {
                    return Err(format!("beta {beta}: {} outside [{lo}, {hi}]", x.data()[k]));
                }
            }
        }
    }
    Ok("100 updates".into())
}

fn beta_schedule_endpoints(_: &SuiteConfig, _: &LossSet) -> std::result::Result<String, String> {
    let s = BetaSchedule::new(1000);
    let (b0, bs, bh) = (beta_at(&s, 0), beta_at(&s, 1000), beta_at(&s, 500));
    if b0 != 0.99995 || bs != 1.0 || (bh - 0.999975).abs() > 1e-15 {
        return Err(format!("beta(0) = {b0}, beta(S/2) = {bh}, beta(S) = {bs}"));
    }
    let mut prev = b0;
    for k in 1..=1000 {
        let b = beta_at(&s, k);
        if b < prev {
            return Err(format!("beta decreases at step {k}"));
        }
        prev = b;
    }
    Ok(format!("beta(0) = {b0}, beta(S/2) = {bh}, beta(S) = {bs}"))
}

fn recall_monotone_and_rsum_exact(cfg: &SuiteConfig, _: &LossSet) -> std::result::Result<String, String> {
    let mut r = rng(cfg, "recall");
    for _ in 0..50 {
        let images = 1 + r.below(12);
        let per = 1 + r.below(5);
        let truth = GroundTruth::grouped(images, per);
        let s = r.uniform_matrix(images, images * per, -1.0, 1.0);
        for d in [Direction::ImageToText, Direction::TextToImage] {
            let mut prev = 0.0;
            for k in 1..=15 {
                let v = recall_at_k(&s, &truth, k, d).map_err(|e| e.to_string())?;
                if v < prev || !(0.0..=100.0).contains(&v) {
                    return Err(format!("{d:?} recall@{k} = {v} after {prev}"));
                }
                prev = v;
            }
        }
        let rep = report(&s, &truth).map_err(|e| e.to_string())?;
        if rep.rsum != rep.recalls().iter().sum::<f64>() || !(-2.0..=2.0).contains(&rep.md) {
            return Err(format!("inconsistent report {rep:?}"));
        }
    }
    Ok("50 galleries".into())
}

fn histogram_conserves_pairs(cfg: &SuiteConfig, _: &LossSet) -> std::result::Result<String, String> {
    let mut r = rng(cfg, "hist");
    for _ in 0..50 {
        let images = 1 + r.below(10);
        let per = 1 + r.below(5);
        let truth = GroundTruth::grouped(images, per);
        let s = r.uniform_matrix(images, images * per, -1.0, 1.0);
        let h = histogram(&s, &truth).map_err(|e| e.to_string())?;
        let pos: u64 = h.positive.iter().sum();
        let neg: u64 = h.negative.iter().sum();
        let cells = (images * images * per) as u64;
        if pos != (images * per) as u64 || pos + neg != cells {
            return Err(format!("{pos} + {neg} != {cells}"));
        }
    }
    Ok("50 galleries".into())
}
