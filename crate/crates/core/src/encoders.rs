//! Toy dual encoder.
//!
//! Both modalities are projected to a shared width `H` by a linear layer. Two
//! scoring paths are available:
//!
//! - **pooled**: tokens are mean-pooled, projected, L2-normalized, and scored by
//!   cosine similarity;
//! - **interaction**: every caption attends over the regions of every image
//!   (text-to-image cross attention), and a small head turns the word-level
//!   alignments into a `tanh` score.
//!
//! Both paths keep every score in `[-1, 1]`.
//!
//! Parameters are initialised uniformly in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
//! from `RngStream::new(seed)`, drawing in the order image weight, image bias,
//! text weight, text bias, then (interaction mode only) head `w1`, `b1`, `w2`,
//! `b2`; each matrix is filled row-major.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Bindings, Gradients, Graph, Matrix, NodeId, RngStream};

pub const IMAGE_W: &str = "image_w";
pub const IMAGE_B: &str = "image_b";
pub const TEXT_W: &str = "text_w";
pub const TEXT_B: &str = "text_b";
pub const HEAD_W1: &str = "head_w1";
pub const HEAD_B1: &str = "head_b1";
pub const HEAD_W2: &str = "head_w2";
pub const HEAD_B2: &str = "head_b2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    Pooled,
    Interaction,
}

/// Missing fields in a serialized config take the [`Default`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub mode: EncoderMode,
    pub image_dim: usize,
    pub text_dim: usize,
    pub hidden: usize,
    /// Width of the word-level alignment vectors in the interaction head.
    pub align_dim: usize,
    /// Inverse softmax temperature of the cross attention.
    pub lambda: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            mode: EncoderMode::Pooled,
            image_dim: 16,
            text_dim: 16,
            hidden: 16,
            align_dim: 8,
            lambda: 9.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_dim == 0 || self.text_dim == 0 {
            return Err(Error::Config("encoder input dims must be >= 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("encoder.hidden must be >= 1".into()));
        }
        if self.mode == EncoderMode::Interaction && self.align_dim == 0 {
            return Err(Error::Config("encoder.align_dim must be >= 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Config("encoder.lambda must be > 0".into()));
        }
        Ok(())
    }
}

/// `x W + b`, with `W` stored `in x out` and `b` as a `1 x out` row.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Linear {
    fn init(rng: &mut RngStream, fan_in: usize, fan_out: usize) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = rng.uniform_matrix(fan_in, fan_out, -bound, bound);
        let bias = rng.uniform_matrix(1, fan_out, -bound, bound);
        Linear { weight, bias }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul(&self.weight)?;
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(self.bias.data()) {
                *o += b;
            }
        }
        Ok(out)
    }
}

/// Head of the interaction path: `w1` is `H x D_A`, `w2` is `D_A x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityHeadParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub image: Linear,
    pub text: Linear,
    pub head: Option<SimilarityHeadParams>,
}

impl EncoderParams {
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::new(seed);
        let image = Linear::init(&mut rng, config.image_dim, config.hidden);
        let text = Linear::init(&mut rng, config.text_dim, config.hidden);
        let head = match config.mode {
            EncoderMode::Pooled => None,
            EncoderMode::Interaction => {
                let l1 = Linear::init(&mut rng, config.hidden, config.align_dim);
                let l2 = Linear::init(&mut rng, config.align_dim, 1);
                Some(SimilarityHeadParams {
                    w1: l1.weight,
                    b1: l1.bias,
                    w2: l2.weight,
                    b2: l2.bias,
                })
            }
        };
        Ok(EncoderParams {
            config: config.clone(),
            image,
            text,
            head,
        })
    }

    /// Parameter matrices in a fixed order, keyed by their graph leaf names.
    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        let mut v = vec![
            (IMAGE_W, &self.image.weight),
            (IMAGE_B, &self.image.bias),
            (TEXT_W, &self.text.weight),
            (TEXT_B, &self.text.bias),
        ];
        if let Some(h) = &self.head {
            v.extend([
                (HEAD_W1, &h.w1),
                (HEAD_B1, &h.b1),
                (HEAD_W2, &h.w2),
                (HEAD_B2, &h.b2),
            ]);
        }
        v
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut v = vec![
            (IMAGE_W, &mut self.image.weight),
            (IMAGE_B, &mut self.image.bias),
            (TEXT_W, &mut self.text.weight),
            (TEXT_B, &mut self.text.bias),
        ];
        if let Some(h) = &mut self.head {
            v.extend([
                (HEAD_W1, &mut h.w1),
                (HEAD_B1, &mut h.b1),
                (HEAD_W2, &mut h.w2),
                (HEAD_B2, &mut h.b2),
            ]);
        }
        v
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.named().into_iter().map(|(n, _)| n).collect()
    }

    pub fn bindings(&self) -> Bindings {
        let mut b = Bindings::new();
        for (name, m) in self.named() {
            b.insert(name, m.clone());
        }
        b
    }

    /// Overwrites parameters from bindings with matching names and shapes.
    pub fn set_from(&mut self, values: &Bindings) -> Result<()> {
        for (name, m) in self.named_mut() {
            let v = values.get(name).ok_or_else(|| Error::Unbound(name.into()))?;
            if v.shape() != m.shape() {
                return Err(Error::shape("set_from", format!("parameter {name}")));
            }
            *m = v.clone();
        }
        Ok(())
    }

    pub fn gradient_shapes_match(&self, grads: &Gradients) -> bool {
        self.named()
            .iter()
            .all(|(n, m)| grads.get(*n).is_some_and(|g| g.shape() == m.shape()))
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, m)| m.is_finite())
    }
}

/// Mean-pooled features: one row per item.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledBatch {
    pub images: Matrix,
    pub texts: Matrix,
}

/// Token features: `K x D_img` per image, `L x D_txt` per caption.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    pub images: Vec<Matrix>,
    pub texts: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderInput {
    Pooled(PooledBatch),
    Tokens(TokenBatch),
}

impl EncoderInput {
    /// `(images, captions)`
    pub fn counts(&self) -> (usize, usize) {
        match self {
            EncoderInput::Pooled(p) => (p.images.rows(), p.texts.rows()),
            EncoderInput::Tokens(t) => (t.images.len(), t.texts.len()),
        }
    }
}

/// Cosine similarity of every image row with every caption row.
pub fn cosine_similarity_matrix(images: &Matrix, texts: &Matrix) -> Result<Matrix> {
    if images.cols() != texts.cols() {
        return Err(Error::shape("cosine_similarity_matrix", "embedding widths differ"));
    }
    let unit = |m: &Matrix, side: &str| -> Result<Matrix> {
        for i in 0..m.rows() {
            if m.row(i).iter().all(|&v| v == 0.0) {
                return Err(Error::Numeric(format!("zero-norm {side} embedding at row {i}")));
            }
        }
        Ok(m.normalize_rows())
    };
    let a = unit(images, "image")?;
    let b = unit(texts, "text")?;
    let mut s = a.matmul(&b.transpose())?;
    // rounding can leave |s| a hair above 1
    s.data_mut().iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    Ok(s)
}

fn linear_nodes(g: &mut Graph, x: NodeId, rows: usize, w: NodeId, b: NodeId) -> NodeId {
    let xw = g.matmul(x, w);
    let ones = g.constant(Matrix::filled(rows, 1, 1.0));
    let bias = g.matmul(ones, b);
    g.add(xw, bias)
}

/// Text-to-image attention. `t` is `L x H` word features, `v` is `K x H` region
/// features; returns the `L x H` attended regions.
pub fn attend_nodes(g: &mut Graph, t: NodeId, v: NodeId, lambda: f64) -> NodeId {
    let tn = g.row_l2_norm(t);
    let vn = g.row_l2_norm(v);
    let vnt = g.transpose(vn);
    attend_normalized(g, tn, vnt, v, lambda)
}

fn attend_normalized(g: &mut Graph, tn: NodeId, vnt: NodeId, v: NodeId, lambda: f64) -> NodeId {
    let cos = g.matmul(tn, vnt);
    let pos = g.hinge(cos);
    let m = g.row_l2_norm(pos);
    let weights = g.row_softmax(m, lambda);
    g.matmul(weights, v)
}

struct HeadNodes {
    w1: NodeId,
    w2: NodeId,
    b2: NodeId,
    /// `b1` broadcast to `L` rows, keyed by `L`.
    b1_rows: HashMap<usize, NodeId>,
    b1: NodeId,
}

impl HeadNodes {
    fn declare(g: &mut Graph) -> Self {
        HeadNodes {
            w1: g.param(HEAD_W1),
            b1: g.param(HEAD_B1),
            w2: g.param(HEAD_W2),
            b2: g.param(HEAD_B2),
            b1_rows: HashMap::new(),
        }
    }

    fn b1_for(&mut self, g: &mut Graph, words: usize) -> NodeId {
        let b1 = self.b1;
        *self.b1_rows.entry(words).or_insert_with(|| {
            let ones = g.constant(Matrix::filled(words, 1, 1.0));
            g.matmul(ones, b1)
        })
    }

    fn score(&mut self, g: &mut Graph, t: NodeId, attended: NodeId, words: usize) -> NodeId {
        let diff = g.sub(t, attended);
        let sq = g.square(diff);
        let proj = g.matmul(sq, self.w1);
        let b1 = self.b1_for(g, words);
        let pre = g.add(proj, b1);
        let align = g.row_l2_norm(pre);
        let mean = g.col_mean(align);
        let out = g.matmul(mean, self.w2);
        let shifted = g.add(out, self.b2);
        g.tanh(shifted)
    }
}

/// Appends the scoring graph for `input` (parameters as leaves named after
/// [`EncoderParams::named`]) and returns the `images x captions` score node.
pub fn build_scores(g: &mut Graph, config: &EncoderConfig, input: &EncoderInput) -> Result<NodeId> {
    let img_w = g.param(IMAGE_W);
    let img_b = g.param(IMAGE_B);
    let txt_w = g.param(TEXT_W);
    let txt_b = g.param(TEXT_B);
    match (config.mode, input) {
        (EncoderMode::Pooled, EncoderInput::Pooled(p)) => {
            check_width(&p.images, config.image_dim, "image")?;
            check_width(&p.texts, config.text_dim, "text")?;
            let x = g.constant(p.images.clone());
            let y = g.constant(p.texts.clone());
            let xi = linear_nodes(g, x, p.images.rows(), img_w, img_b);
            let yt = linear_nodes(g, y, p.texts.rows(), txt_w, txt_b);
            let xi = g.row_l2_norm(xi);
            let yt = g.row_l2_norm(yt);
            let ytt = g.transpose(yt);
            Ok(g.matmul(xi, ytt))
        }
        (EncoderMode::Interaction, EncoderInput::Tokens(tb)) => {
            let mut head = HeadNodes::declare(g);
            let mut regions = Vec::with_capacity(tb.images.len());
            for im in &tb.images {
                check_width(im, config.image_dim, "image")?;
                if im.rows() == 0 {
                    return Err(Error::shape("build_scores", "image with no regions"));
                }
                let x = g.constant(im.clone());
                let v = linear_nodes(g, x, im.rows(), img_w, img_b);
                let vn = g.row_l2_norm(v);
                let vnt = g.transpose(vn);
                regions.push((v, vnt));
            }
            let mut words = Vec::with_capacity(tb.texts.len());
            for tx in &tb.texts {
                check_width(tx, config.text_dim, "text")?;
                if tx.rows() == 0 {
                    return Err(Error::shape("build_scores", "caption with no words"));
                }
                let y = g.constant(tx.clone());
                let t = linear_nodes(g, y, tx.rows(), txt_w, txt_b);
                let tn = g.row_l2_norm(t);
                words.push((t, tn, tx.rows()));
            }
            let mut cells = Vec::with_capacity(regions.len() * words.len());
            for &(v, vnt) in &regions {
                for &(t, tn, len) in &words {
                    let attended = attend_normalized(g, tn, vnt, v, config.lambda);
                    cells.push(head.score(g, t, attended, len));
                }
            }
            Ok(g.assemble(cells, regions.len(), words.len()))
        }
        (mode, _) => Err(Error::shape(
            "build_scores",
            format!("input kind does not match encoder mode {mode:?}"),
        )),
    }
}

fn check_width(m: &Matrix, want: usize, side: &str) -> Result<()> {
    if m.cols() != want {
        return Err(Error::shape(
            "build_scores",
            format!("{side} features have width {}, encoder expects {want}", m.cols()),
        ));
    }
    Ok(())
}

/// Similarity matrix (`images x captions`) for one branch.
pub fn score_batch(params: &EncoderParams, input: &EncoderInput) -> Result<Matrix> {
    match (params.config.mode, input) {
        // For big galleries build one row of pairs at a time to bound graph size.
        (EncoderMode::Interaction, EncoderInput::Tokens(tb)) if tb.images.len() > 1 => {
            let binds = params.bindings();
            let mut rows = Vec::with_capacity(tb.images.len());
            for im in &tb.images {
                let single = EncoderInput::Tokens(TokenBatch {
                    images: vec![im.clone()],
                    texts: tb.texts.clone(),
                });
                let mut g = Graph::new();
                let s = build_scores(&mut g, &params.config, &single)?;
                rows.push(g.forward(&binds)?.value(s).clone());
            }
            Matrix::vstack(&rows.iter().collect::<Vec<_>>())
        }
        _ => {
            let mut g = Graph::new();
            let s = build_scores(&mut g, &params.config, input)?;
            let mut out = g.forward(&params.bindings())?.value(s).clone();
            out.data_mut().iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
            Ok(out)
        }
    }
}

fn with_graph<T>(
    f: impl FnOnce(&mut Graph) -> Result<(NodeId, T)>,
    bindings: &Bindings,
) -> Result<(Matrix, T)> {
    let mut g = Graph::new();
    let (root, extra) = f(&mut g)?;
    Ok((g.forward(bindings)?.value(root).clone(), extra))
}

/// Text-to-image cross attention on plain matrices.
pub fn cross_attend(t: &Matrix, v: &Matrix, lambda: f64) -> Result<Matrix> {
    if t.rows() == 0 || v.rows() == 0 {
        return Err(Error::shape("cross_attend", "need at least one word and one region"));
    }
    if t.cols() != v.cols() {
        return Err(Error::shape("cross_attend", "feature widths differ"));
    }
    let (out, ()) = with_graph(
        |g| {
            let tn = g.constant(t.clone());
            let vn = g.constant(v.clone());
            Ok((attend_nodes(g, tn, vn, lambda), ()))
        },
        &Bindings::new(),
    )?;
    Ok(out)
}

/// Scalar score of word features `t` against attended regions `attended`.
pub fn similarity_head(t: &Matrix, attended: &Matrix, head: &SimilarityHeadParams) -> Result<f64> {
    if t.shape() != attended.shape() {
        return Err(Error::shape("similarity_head", "T and V' shapes differ"));
    }
    if head.w1.rows() != t.cols() {
        return Err(Error::shape("similarity_head", "w1 rows must equal feature width"));
    }
    let binds = Bindings::new()
        .with(HEAD_W1, head.w1.clone())
        .with(HEAD_B1, head.b1.clone())
        .with(HEAD_W2, head.w2.clone())
        .with(HEAD_B2, head.b2.clone());
    let (out, ()) = with_graph(
        |g| {
            let mut nodes = HeadNodes::declare(g);
            let tn = g.constant(t.clone());
            let an = g.constant(attended.clone());
            Ok((nodes.score(g, tn, an, t.rows()), ()))
        },
        &binds,
    )?;
    Ok(out[(0, 0)])
}

const CHECKPOINT_FORMAT: &str = "boostlab-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// JSON checkpoint: a header (`format`, `version`, encoder config, seed) followed
/// by every parameter matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub encoder: EncoderConfig,
    pub seed: u64,
    pub matrices: Vec<NamedMatrix>,
}

impl Checkpoint {
    pub fn from_params(params: &EncoderParams, seed: u64) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            encoder: params.config.clone(),
            seed,
            matrices: params
                .named()
                .into_iter()
                .map(|(name, m)| NamedMatrix {
                    name: name.into(),
                    rows: m.rows(),
                    cols: m.cols(),
                    data: m.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_params(&self) -> Result<EncoderParams> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("unknown checkpoint format `{}`", self.format)));
        }
        let mut params = EncoderParams::init(&self.encoder, self.seed)?;
        let mut b = Bindings::new();
        for nm in &self.matrices {
            b.insert(nm.name.clone(), Matrix::from_vec(nm.rows, nm.cols, nm.data.clone())?);
        }
        params.set_from(&b)?;
        if !params.is_finite() {
            return Err(Error::Format("checkpoint holds non-finite parameters".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interaction_config() -> EncoderConfig {
        EncoderConfig {
            mode: EncoderMode::Interaction,
            image_dim: 6,
            text_dim: 5,
            hidden: 4,
            align_dim: 3,
            lambda: 9.0,
        }
    }

    #[test]
    fn cosine_of_identical_vectors_is_one() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]);
        let s = cosine_similarity_matrix(&m, &m).unwrap();
        for i in 0..2 {
            assert!((s[(i, i)] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cosine_of_orthogonal_vectors_is_zero() {
        let a = Matrix::from_rows(&[[1.0, 0.0]]);
        let b = Matrix::from_rows(&[[0.0, 2.0]]);
        assert_eq!(cosine_similarity_matrix(&a, &b).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn cosine_at_forty_five_degrees() {
        let a = Matrix::from_rows(&[[1.0, 0.0]]);
        let r = 1.0 / 2f64.sqrt();
        let b = Matrix::from_rows(&[[r, r]]);
        let s = cosine_similarity_matrix(&a, &b).unwrap()[(0, 0)];
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        let a = Matrix::from_rows(&[[0.0, 0.0]]);
        let b = Matrix::from_rows(&[[1.0, 0.0]]);
        assert!(matches!(cosine_similarity_matrix(&a, &b), Err(Error::Numeric(_))));
    }

    #[test]
    fn single_region_attention_copies_region() {
        let t = Matrix::from_rows(&[[0.3, -0.1], [1.0, 2.0], [-0.5, 0.2]]);
        let v = Matrix::from_rows(&[[0.7, -0.4]]);
        let out = cross_attend(&t, &v, 9.0).unwrap();
        for i in 0..3 {
            assert_eq!(out.row(i), v.row(0));
        }
    }

    #[test]
    fn zero_attention_map_averages_regions() {
        // Both regions are negatively aligned with the word, so M is all zeros.
        let t = Matrix::from_rows(&[[1.0, 0.0]]);
        let v = Matrix::from_rows(&[[-1.0, 0.5], [-2.0, -0.3]]);
        let out = cross_attend(&t, &v, 9.0).unwrap();
        assert!((out[(0, 0)] - (-1.5)).abs() < 1e-15);
        assert!((out[(0, 1)] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn attention_rejects_empty_inputs() {
        let t = Matrix::zeros(0, 2);
        let v = Matrix::from_rows(&[[1.0, 0.0]]);
        assert!(cross_attend(&t, &v, 9.0).is_err());
        assert!(cross_attend(&v, &t, 9.0).is_err());
    }

    #[test]
    fn head_on_identical_inputs_returns_tanh_b2() {
        let mut rng = RngStream::new(4);
        let t = rng.normal_matrix(3, 4, 1.0);
        let head = SimilarityHeadParams {
            w1: rng.normal_matrix(4, 3, 1.0),
            b1: Matrix::zeros(1, 3),
            w2: rng.normal_matrix(3, 1, 1.0),
            b2: Matrix::scalar(0.37),
        };
        let s = similarity_head(&t, &t, &head).unwrap();
        assert_eq!(s, 0.37f64.tanh());
    }

    #[test]
    fn head_with_zero_w2_ignores_inputs() {
        let mut rng = RngStream::new(5);
        let head = SimilarityHeadParams {
            w1: rng.normal_matrix(4, 3, 1.0),
            b1: rng.normal_matrix(1, 3, 1.0),
            w2: Matrix::zeros(3, 1),
            b2: Matrix::scalar(-0.8),
        };
        let s = similarity_head(&rng.normal_matrix(2, 4, 1.0), &rng.normal_matrix(2, 4, 1.0), &head)
            .unwrap();
        assert_eq!(s, (-0.8f64).tanh());
    }

    #[test]
    fn single_pair_gives_one_by_one() {
        let cfg = EncoderConfig::default();
        let p = EncoderParams::init(&cfg, 1).unwrap();
        let mut rng = RngStream::new(2);
        let input = EncoderInput::Pooled(PooledBatch {
            images: rng.normal_matrix(1, 16, 1.0),
            texts: rng.normal_matrix(1, 16, 1.0),
        });
        assert_eq!(score_batch(&p, &input).unwrap().shape(), (1, 1));
    }

    #[test]
    fn pooled_orthonormal_embeddings_give_identity() {
        // identity projections with zero bias map inputs straight to embeddings
        let cfg = EncoderConfig {
            image_dim: 3,
            text_dim: 3,
            hidden: 3,
            ..EncoderConfig::default()
        };
        let mut p = EncoderParams::init(&cfg, 1).unwrap();
        p.image = Linear {
            weight: Matrix::identity(3),
            bias: Matrix::zeros(1, 3),
        };
        p.text = p.image.clone();
        let e = Matrix::identity(3);
        let s = score_batch(
            &p,
            &EncoderInput::Pooled(PooledBatch {
                images: e.clone(),
                texts: e,
            }),
        )
        .unwrap();
        assert_eq!(s, Matrix::identity(3));
    }

    #[test]
    fn mode_mismatch_is_an_error() {
        let p = EncoderParams::init(&interaction_config(), 1).unwrap();
        let input = EncoderInput::Pooled(PooledBatch {
            images: Matrix::zeros(2, 6),
            texts: Matrix::zeros(2, 5),
        });
        assert!(score_batch(&p, &input).is_err());
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let p = EncoderParams::init(&EncoderConfig::default(), 1).unwrap();
        let input = EncoderInput::Pooled(PooledBatch {
            images: Matrix::filled(2, 15, 1.0),
            texts: Matrix::filled(2, 16, 1.0),
        });
        assert!(matches!(score_batch(&p, &input), Err(Error::Shape { .. })));
    }

    #[test]
    fn interaction_scores_are_bounded() {
        let cfg = interaction_config();
        let p = EncoderParams::init(&cfg, 9).unwrap();
        let mut rng = RngStream::new(10);
        let input = EncoderInput::Tokens(TokenBatch {
            images: (0..3).map(|_| rng.normal_matrix(4, 6, 2.0)).collect(),
            texts: (0..3).map(|_| rng.normal_matrix(2, 5, 2.0)).collect(),
        });
        let s = score_batch(&p, &input).unwrap();
        assert!(s.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = interaction_config();
        let a = EncoderParams::init(&cfg, 3).unwrap();
        let b = EncoderParams::init(&cfg, 3).unwrap();
        let c = EncoderParams::init(&cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bound = 1.0 / (cfg.image_dim as f64).sqrt();
        assert!(a.image.weight.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = EncoderParams::init(&interaction_config(), 21).unwrap();
        let ck = Checkpoint::from_params(&p, 21);
        let text = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_params().unwrap(), p);
    }
}
