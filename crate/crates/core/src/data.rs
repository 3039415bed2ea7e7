//! Synthetic paired-modality data.
//!
//! Each image `n` has a latent `z_n ~ N(0, I / d_z)`. Its `K` region tokens are
//! `A z_n + σ ε` and each of its `C` captions has `L` word tokens `B z_n + σ ε`,
//! where `A` (`D_img x d_z`) and `B` (`D_txt x d_z`) are random matrices with
//! orthonormal columns drawn once per dataset. Images are assigned to splits by
//! contiguous index: train first, then val, then test. Caption `k` of image `n`
//! has global index `n C + k`.
//!
//! Draw order (each from its own sub-seed of the dataset seed): `A` then `B`
//! from `"data/maps"`, all latents from `"data/latent"`, then image tokens and
//! caption tokens (image by image) from `"data/noise"`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::ops::Range;
use std::path::Path;

use crate::encoders::{EncoderInput, EncoderMode, PooledBatch, TokenBatch};
use crate::error::{Error, Result};
use crate::numcore::{derive_seed, Matrix, RngStream};

fn default_dim() -> usize {
    16
}
fn default_captions() -> usize {
    5
}
fn default_noise() -> f64 {
    0.3
}
fn default_tokens() -> usize {
    4
}
fn default_train() -> usize {
    800
}
fn default_val() -> usize {
    100
}
fn default_test() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentSpec {
    pub latent_dim: usize,
    #[serde(default = "default_dim")]
    pub image_dim: usize,
    #[serde(default = "default_dim")]
    pub text_dim: usize,
    #[serde(default = "default_captions")]
    pub captions_per_image: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Region tokens per image (`K`).
    #[serde(default = "default_tokens")]
    pub regions: usize,
    /// Word tokens per caption (`L`).
    #[serde(default = "default_tokens")]
    pub words: usize,
    #[serde(default = "default_train")]
    pub train: usize,
    #[serde(default = "default_val")]
    pub val: usize,
    #[serde(default = "default_test")]
    pub test: usize,
}

impl Default for LatentSpec {
    fn default() -> Self {
        LatentSpec {
            latent_dim: default_dim(),
            image_dim: default_dim(),
            text_dim: default_dim(),
            captions_per_image: default_captions(),
            noise: default_noise(),
            regions: default_tokens(),
            words: default_tokens(),
            train: default_train(),
            val: default_val(),
            test: default_test(),
        }
    }
}

impl LatentSpec {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("latent_dim", self.latent_dim),
            ("image_dim", self.image_dim),
            ("text_dim", self.text_dim),
            ("captions_per_image", self.captions_per_image),
            ("regions", self.regions),
            ("words", self.words),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("data.{name} must be >= 1")));
            }
        }
        if self.image_dim < self.latent_dim || self.text_dim < self.latent_dim {
            return Err(Error::Config(
                "data.image_dim and data.text_dim must be >= data.latent_dim".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("data.noise must be >= 0, got {}", self.noise)));
        }
        if self.images() == 0 {
            return Err(Error::Config("data needs at least one image".into()));
        }
        Ok(())
    }

    pub fn images(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub spec: LatentSpec,
    pub seed: u64,
    pub image_map: Matrix,
    pub text_map: Matrix,
    pub latents: Matrix,
    /// `K x D_img` per image.
    pub image_tokens: Vec<Matrix>,
    /// `L x D_txt` per caption.
    pub caption_tokens: Vec<Matrix>,
    pooled_images: Matrix,
    pooled_captions: Matrix,
}

/// Random `rows x cols` matrix with orthonormal columns (Gram–Schmidt on Gaussians).
pub fn orthonormal_columns(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    assert!(rows >= cols, "need rows >= cols");
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while basis.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Matrix::from_fn(rows, cols, |i, j| basis[j][i])
}

fn mean_rows(tokens: &[Matrix], width: usize) -> Matrix {
    let mut out = Matrix::zeros(tokens.len(), width);
    for (n, t) in tokens.iter().enumerate() {
        out.row_mut(n).copy_from_slice(t.col_mean().data());
    }
    out
}

pub fn generate(spec: &LatentSpec, seed: u64) -> Result<PairDataset> {
    spec.validate()?;
    let n = spec.images();
    let c = spec.captions_per_image;

    let mut maps = RngStream::derive(seed, "data/maps");
    let image_map = orthonormal_columns(spec.image_dim, spec.latent_dim, &mut maps);
    let text_map = orthonormal_columns(spec.text_dim, spec.latent_dim, &mut maps);

    let mut lat = RngStream::derive(seed, "data/latent");
    let latents = lat.normal_matrix(n, spec.latent_dim, 1.0 / (spec.latent_dim as f64).sqrt());

    // Clean signals: row n of Z Aᵀ is A z_n.
    let image_clean = latents.matmul(&image_map.transpose())?;
    let text_clean = latents.matmul(&text_map.transpose())?;

    let mut noise = RngStream::derive(seed, "data/noise");
    let sigma = spec.noise;
    let mut image_tokens = Vec::with_capacity(n);
    let mut caption_tokens = Vec::with_capacity(n * c);
    for i in 0..n {
        let base = image_clean.row(i);
        image_tokens.push(Matrix::from_fn(spec.regions, spec.image_dim, |_, d| {
            base[d] + sigma * noise.normal()
        }));
        let base = text_clean.row(i);
        for _ in 0..c {
            caption_tokens.push(Matrix::from_fn(spec.words, spec.text_dim, |_, d| {
                base[d] + sigma * noise.normal()
            }));
        }
    }
    let pooled_images = mean_rows(&image_tokens, spec.image_dim);
    let pooled_captions = mean_rows(&caption_tokens, spec.text_dim);
    Ok(PairDataset {
        spec: spec.clone(),
        seed,
        image_map,
        text_map,
        latents,
        image_tokens,
        caption_tokens,
        pooled_images,
        pooled_captions,
    })
}

/// One epoch's worth of positive pairs for a training step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    /// Global image indices, all distinct.
    pub images: Vec<usize>,
    /// Global caption indices; `captions[k]` belongs to `images[k]`.
    pub captions: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Image-to-caption ground truth for a gallery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub images: usize,
    /// Gallery row of the image each caption column belongs to.
    pub caption_image: Vec<usize>,
}

impl GroundTruth {
    /// Gallery where caption column `j` belongs to image row `j / per_image`.
    pub fn grouped(images: usize, per_image: usize) -> Self {
        GroundTruth {
            images,
            caption_image: (0..images * per_image).map(|j| j / per_image).collect(),
        }
    }

    pub fn captions(&self) -> usize {
        self.caption_image.len()
    }

    pub fn is_positive(&self, image: usize, caption: usize) -> bool {
        self.caption_image[caption] == image
    }
}

/// Full retrieval gallery for one split: every image against every caption.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    pub images: Vec<usize>,
    pub captions: Vec<usize>,
    pub truth: GroundTruth,
}

impl PairDataset {
    pub fn split_range(&self, split: Split) -> Range<usize> {
        let s = &self.spec;
        match split {
            Split::Train => 0..s.train,
            Split::Val => s.train..s.train + s.val,
            Split::Test => s.train + s.val..s.images(),
        }
    }

    pub fn split_of(&self, image: usize) -> Split {
        if image < self.spec.train {
            Split::Train
        } else if image < self.spec.train + self.spec.val {
            Split::Val
        } else {
            Split::Test
        }
    }

    pub fn image_of_caption(&self, caption: usize) -> usize {
        caption / self.spec.captions_per_image
    }

    pub fn captions_of(&self, image: usize) -> Range<usize> {
        let c = self.spec.captions_per_image;
        image * c..(image + 1) * c
    }

    pub fn pooled_images(&self) -> &Matrix {
        &self.pooled_images
    }

    pub fn pooled_captions(&self) -> &Matrix {
        &self.pooled_captions
    }

    /// Encoder input for the given images and captions.
    pub fn input(&self, images: &[usize], captions: &[usize], mode: EncoderMode) -> EncoderInput {
        match mode {
            EncoderMode::Pooled => {
                let pick = |m: &Matrix, idx: &[usize]| {
                    Matrix::from_fn(idx.len(), m.cols(), |r, c| m[(idx[r], c)])
                };
                EncoderInput::Pooled(PooledBatch {
                    images: pick(&self.pooled_images, images),
                    texts: pick(&self.pooled_captions, captions),
                })
            }
            EncoderMode::Interaction => EncoderInput::Tokens(TokenBatch {
                images: images.iter().map(|&i| self.image_tokens[i].clone()).collect(),
                texts: captions.iter().map(|&c| self.caption_tokens[c].clone()).collect(),
            }),
        }
    }

    pub fn batch_input(&self, batch: &Batch, mode: EncoderMode) -> EncoderInput {
        self.input(&batch.images, &batch.captions, mode)
    }

    pub fn gallery(&self, split: Split) -> Result<Gallery> {
        let images: Vec<usize> = self.split_range(split).collect();
        if images.is_empty() {
            return Err(Error::Config(format!("split `{split}` is empty")));
        }
        let captions = images.iter().flat_map(|&i| self.captions_of(i)).collect();
        let truth = GroundTruth::grouped(images.len(), self.spec.captions_per_image);
        Ok(Gallery {
            images,
            captions,
            truth,
        })
    }

    /// SHA-256 (hex) over the little-endian bytes of the modality maps, the
    /// latents and every token matrix, in that order.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |m: &Matrix| {
            for v in m.data() {
                h.update(v.to_le_bytes());
            }
        };
        feed(&self.image_map);
        feed(&self.text_map);
        feed(&self.latents);
        self.image_tokens.iter().for_each(&mut feed);
        self.caption_tokens.iter().for_each(&mut feed);
        hex::encode(h.finalize())
    }
}

/// Shuffled batches over the images of `split`. Each batch takes `n` distinct
/// images with one randomly chosen caption each; a final batch smaller than 2
/// is dropped.
pub fn batches(dataset: &PairDataset, split: Split, n: usize, seed: u64) -> Result<Vec<Batch>> {
    if n < 2 {
        return Err(Error::Config(format!("batch size must be >= 2, got {n}")));
    }
    let mut order: Vec<usize> = dataset.split_range(split).collect();
    if order.is_empty() {
        return Err(Error::Config(format!("split `{split}` is empty")));
    }
    let mut rng = RngStream::new(seed);
    rng.shuffle(&mut order);
    let c = dataset.spec.captions_per_image;
    let mut out = Vec::with_capacity(order.len().div_ceil(n));
    for chunk in order.chunks(n) {
        if chunk.len() < 2 {
            break;
        }
        let captions = chunk.iter().map(|&i| i * c + rng.below(c)).collect();
        out.push(Batch {
            images: chunk.to_vec(),
            captions,
        });
    }
    Ok(out)
}

/// Batch sequence for training epoch `epoch` of a run seeded with `seed`.
pub fn epoch_batches(dataset: &PairDataset, n: usize, seed: u64, epoch: usize) -> Result<Vec<Batch>> {
    let s = derive_seed(derive_seed(seed, "batches"), &format!("epoch/{epoch}"));
    batches(dataset, Split::Train, n, s)
}

pub fn test_pairs(dataset: &PairDataset) -> Result<Gallery> {
    dataset.gallery(Split::Test)
}

/// Mean cosine of positive pairs after mapping both modalities back to the
/// latent space with the true maps (`Aᵀ x`, `Bᵀ y`).
pub fn oracle_positive_cosine(dataset: &PairDataset) -> Result<f64> {
    let zi = dataset.pooled_images.matmul(&dataset.image_map)?.normalize_rows();
    let zt = dataset.pooled_captions.matmul(&dataset.text_map)?.normalize_rows();
    let mut total = 0.0;
    for j in 0..zt.rows() {
        let i = dataset.image_of_caption(j);
        total += zi.row(i).iter().zip(zt.row(j)).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total / zt.rows() as f64)
}

pub const DATASET_FORMAT: &str = "boostlab-dataset";

/// On-disk form of a dataset: enough to regenerate it, plus a checksum to verify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub format: String,
    pub spec: LatentSpec,
    pub seed: u64,
    pub checksum: String,
}

impl DatasetFile {
    pub fn describe(dataset: &PairDataset) -> Self {
        DatasetFile {
            format: DATASET_FORMAT.into(),
            spec: dataset.spec.clone(),
            seed: dataset.seed,
            checksum: dataset.checksum(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.format != DATASET_FORMAT {
            return Err(Error::Format(format!("not a dataset file: format `{}`", file.format)));
        }
        Ok(file)
    }

    /// Regenerates the dataset and checks it against the stored checksum.
    pub fn regenerate(&self) -> Result<PairDataset> {
        let ds = generate(&self.spec, self.seed)?;
        let sum = ds.checksum();
        if sum != self.checksum {
            return Err(Error::Format(format!(
                "regenerated dataset checksum {sum} does not match stored {}",
                self.checksum
            )));
        }
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LatentSpec {
        LatentSpec {
            latent_dim: 4,
            image_dim: 6,
            text_dim: 5,
            captions_per_image: 3,
            noise: 0.2,
            regions: 2,
            words: 3,
            train: 10,
            val: 3,
            test: 2,
        }
    }

    #[test]
    fn maps_are_orthonormal() {
        let ds = generate(&small(), 1).unwrap();
        let g = ds.image_map.transpose().matmul(&ds.image_map).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn regeneration_is_identical() {
        let a = generate(&small(), 5).unwrap();
        let b = generate(&small(), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.checksum(), b.checksum());
        assert_ne!(a.checksum(), generate(&small(), 6).unwrap().checksum());
    }

    #[test]
    fn shapes_and_splits() {
        let ds = generate(&small(), 2).unwrap();
        assert_eq!(ds.image_tokens.len(), 15);
        assert_eq!(ds.caption_tokens.len(), 45);
        assert_eq!(ds.image_tokens[0].shape(), (2, 6));
        assert_eq!(ds.caption_tokens[0].shape(), (3, 5));
        assert_eq!(ds.split_range(Split::Val), 10..13);
        assert_eq!(ds.split_of(14), Split::Test);
        assert_eq!(ds.image_of_caption(44), 14);
    }

    #[test]
    fn full_size_batch_is_single() {
        let ds = generate(&small(), 3).unwrap();
        let b = batches(&ds, Split::Train, 10, 9).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 10);
    }

    #[test]
    fn short_tail_dropped() {
        let ds = generate(&small(), 3).unwrap();
        assert_eq!(batches(&ds, Split::Train, 3, 1).unwrap().len(), 3);
        assert_eq!(batches(&ds, Split::Train, 4, 1).unwrap().len(), 3);
        assert!(batches(&ds, Split::Train, 1, 1).is_err());
    }

    #[test]
    fn noiseless_oracle_is_exact() {
        let spec = LatentSpec {
            noise: 0.0,
            ..small()
        };
        let ds = generate(&spec, 4).unwrap();
        assert!((oracle_positive_cosine(&ds).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn test_gallery_groups_captions() {
        let ds = generate(&small(), 4).unwrap();
        let g = test_pairs(&ds).unwrap();
        assert_eq!(g.images, vec![13, 14]);
        assert_eq!(g.captions.len(), 6);
        assert_eq!(g.truth.caption_image, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn validation_names_fields() {
        let mut s = small();
        s.latent_dim = 0;
        assert!(matches!(s.validate(), Err(Error::Config(m)) if m.contains("latent_dim")));
        let mut s = small();
        s.noise = -1.0;
        assert!(s.validate().is_err());
    }
}
