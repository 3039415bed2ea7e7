//! Retrieval metrics over a full gallery.
//!
//! Gallery rows are images and columns are captions. Candidates are ranked by
//! descending score with ties going to the lower index, so the rank of candidate
//! `j` is the number of candidates scoring strictly higher plus the number of
//! lower-indexed candidates scoring equally.

use serde::{Deserialize, Serialize};

use crate::data::GroundTruth;
use crate::error::{Error, Result};
use crate::numcore::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Image query, caption candidates; any positive caption counts.
    ImageToText,
    /// Caption query, image candidates.
    TextToImage,
}

/// How the mean distance between positives and negatives is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdMode {
    /// Mean over positive cells minus mean over negative cells.
    #[default]
    MeanDifference,
    /// Mean over caption queries of positive score minus the hardest negative image's score.
    HardestNegative,
}

fn check(scores: &Matrix, truth: &GroundTruth) -> Result<()> {
    if scores.rows() != truth.images || scores.cols() != truth.captions() {
        return Err(Error::shape(
            "gallery",
            format!(
                "scores are {}x{} but ground truth has {} images and {} captions",
                scores.rows(),
                scores.cols(),
                truth.images,
                truth.captions()
            ),
        ));
    }
    if scores.rows() == 0 || scores.cols() == 0 {
        return Err(Error::shape("gallery", "empty gallery"));
    }
    Ok(())
}

/// Rank (0-based) of `target` among `scores`.
fn rank_of(scores: impl Iterator<Item = f64> + Clone, target: usize, value: f64) -> usize {
    scores
        .enumerate()
        .filter(|&(j, s)| s > value || (s == value && j < target))
        .count()
}

/// Best (lowest) rank of a positive for every query.
fn best_ranks(scores: &Matrix, truth: &GroundTruth, direction: Direction) -> Vec<usize> {
    match direction {
        Direction::ImageToText => (0..scores.rows())
            .map(|i| {
                let row = scores.row(i);
                (0..row.len())
                    .filter(|&j| truth.is_positive(i, j))
                    .map(|j| rank_of(row.iter().copied(), j, row[j]))
                    .min()
                    .unwrap_or(usize::MAX)
            })
            .collect(),
        Direction::TextToImage => (0..scores.cols())
            .map(|c| {
                let i = truth.caption_image[c];
                let col = (0..scores.rows()).map(|r| scores[(r, c)]);
                rank_of(col, i, scores[(i, c)])
            })
            .collect(),
    }
}

/// Percentage of queries with a positive among the top `k` candidates.
pub fn recall_at_k(scores: &Matrix, truth: &GroundTruth, k: usize, direction: Direction) -> Result<f64> {
    check(scores, truth)?;
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let ranks = best_ranks(scores, truth, direction);
    Ok(percent(&ranks, k))
}

fn percent(ranks: &[usize], k: usize) -> f64 {
    let hits = ranks.iter().filter(|&&r| r < k).count();
    100.0 * hits as f64 / ranks.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub r1_i2t: f64,
    pub r5_i2t: f64,
    pub r10_i2t: f64,
    pub r1_t2i: f64,
    pub r5_t2i: f64,
    pub r10_t2i: f64,
    pub rsum: f64,
    pub md: f64,
}

impl RetrievalReport {
    pub fn recalls(&self) -> [f64; 6] {
        [
            self.r1_i2t,
            self.r5_i2t,
            self.r10_i2t,
            self.r1_t2i,
            self.r5_t2i,
            self.r10_t2i,
        ]
    }
}

pub fn report(scores: &Matrix, truth: &GroundTruth) -> Result<RetrievalReport> {
    report_with(scores, truth, MdMode::default())
}

pub fn report_with(scores: &Matrix, truth: &GroundTruth, md_mode: MdMode) -> Result<RetrievalReport> {
    check(scores, truth)?;
    let i2t = best_ranks(scores, truth, Direction::ImageToText);
    let t2i = best_ranks(scores, truth, Direction::TextToImage);
    let recalls = [
        percent(&i2t, 1),
        percent(&i2t, 5),
        percent(&i2t, 10),
        percent(&t2i, 1),
        percent(&t2i, 5),
        percent(&t2i, 10),
    ];
    Ok(RetrievalReport {
        r1_i2t: recalls[0],
        r5_i2t: recalls[1],
        r10_i2t: recalls[2],
        r1_t2i: recalls[3],
        r5_t2i: recalls[4],
        r10_t2i: recalls[5],
        rsum: recalls.iter().sum(),
        md: mean_distance(scores, truth, md_mode)?,
    })
}

/// Separation of positive and negative scores. With no negative cells the
/// negative mean is taken as 0.
pub fn mean_distance(scores: &Matrix, truth: &GroundTruth, mode: MdMode) -> Result<f64> {
    check(scores, truth)?;
    match mode {
        MdMode::MeanDifference => {
            let (mut pos, mut np, mut neg, mut nn) = (0.0, 0usize, 0.0, 0usize);
            for i in 0..scores.rows() {
                for (j, &s) in scores.row(i).iter().enumerate() {
                    if truth.is_positive(i, j) {
                        pos += s;
                        np += 1;
                    } else {
                        neg += s;
                        nn += 1;
                    }
                }
            }
            let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
            Ok(mean(pos, np) - mean(neg, nn))
        }
        MdMode::HardestNegative => {
            if scores.rows() < 2 {
                return Ok(0.0);
            }
            let mut total = 0.0;
            for c in 0..scores.cols() {
                let i = truth.caption_image[c];
                let hardest = (0..scores.rows())
                    .filter(|&r| r != i)
                    .map(|r| scores[(r, c)])
                    .fold(f64::NEG_INFINITY, f64::max);
                total += scores[(i, c)] - hardest;
            }
            Ok(total / scores.cols() as f64)
        }
    }
}

pub const HIST_BINS: usize = 100;

/// Counts of positive and negative gallery scores in 100 equal bins over `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub positive: Vec<u64>,
    pub negative: Vec<u64>,
}

impl Histogram {
    pub fn bin_edges(bin: usize) -> (f64, f64) {
        let w = 2.0 / HIST_BINS as f64;
        (-1.0 + w * bin as f64, -1.0 + w * (bin + 1) as f64)
    }

    /// Bin of a score; values are clamped to `[-1, 1]` and `1.0` falls in the last bin.
    pub fn bin_of(score: f64) -> usize {
        let s = score.clamp(-1.0, 1.0);
        let b = ((s + 1.0) / 2.0 * HIST_BINS as f64).floor() as usize;
        b.min(HIST_BINS - 1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,pos_count,neg_count\n");
        for b in 0..HIST_BINS {
            let (lo, hi) = Self::bin_edges(b);
            out.push_str(&format!(
                "{lo:.2},{hi:.2},{},{}\n",
                self.positive[b], self.negative[b]
            ));
        }
        out
    }
}

pub fn histogram(scores: &Matrix, truth: &GroundTruth) -> Result<Histogram> {
    check(scores, truth)?;
    let mut h = Histogram {
        positive: vec![0; HIST_BINS],
        negative: vec![0; HIST_BINS],
    };
    for i in 0..scores.rows() {
        for (j, &s) in scores.row(i).iter().enumerate() {
            let b = Histogram::bin_of(s);
            if truth.is_positive(i, j) {
                h.positive[b] += 1;
            } else {
                h.negative[b] += 1;
            }
        }
    }
    Ok(h)
}
