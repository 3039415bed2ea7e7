use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Hardest negative per positive pair, in both retrieval directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinedNegatives {
    /// For image (row) `i`, the column of its hardest negative caption; never `i`.
    pub hardest_caption: Vec<usize>,
    /// For caption (column) `c`, the row of its hardest negative image; never `c`.
    pub hardest_image: Vec<usize>,
}

/// Hardest negatives by the target's own scores: off-diagonal row and column argmax.
pub fn mine_hardest_self(target: &Matrix) -> Result<MinedNegatives> {
    check_square(target)?;
    Ok(argmax_off_diagonal(target))
}

/// Hardest negatives by `target - anchor`: the negatives whose target score has
/// risen furthest above the anchor's.
pub fn mine_hardest_diff(target: &Matrix, anchor: &Matrix) -> Result<MinedNegatives> {
    check_square(target)?;
    if anchor.shape() != target.shape() {
        return Err(Error::shape("mine_hardest_diff", "target and anchor shapes differ"));
    }
    let diff = target.zip_map(anchor, |t, a| t - a)?;
    Ok(argmax_off_diagonal(&diff))
}

/// Smallest gap between the largest and second-largest off-diagonal entry over
/// every row and column of `m`; infinite when each line has a single candidate.
/// Mining by `m` is locally constant under perturbations smaller than half of it.
pub fn mining_margin(m: &Matrix) -> f64 {
    let n = m.rows();
    let gap = |vals: Vec<f64>| {
        let mut top = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for v in vals {
            if v > top {
                second = top;
                top = v;
            } else if v > second {
                second = v;
            }
        }
        top - second
    };
    let mut worst = f64::INFINITY;
    for i in 0..n {
        worst = worst.min(gap((0..n).filter(|&j| j != i).map(|j| m[(i, j)]).collect()));
        worst = worst.min(gap((0..n).filter(|&j| j != i).map(|j| m[(j, i)]).collect()));
    }
    worst
}

fn check_square(m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::shape("mine", "similarity matrix must be square"));
    }
    if m.rows() < 2 {
        return Err(Error::shape("mine", "need at least two pairs to have a negative"));
    }
    Ok(())
}

/// Ties go to the lowest index (strict `>` while scanning upward).
fn argmax_off_diagonal(m: &Matrix) -> MinedNegatives {
    let n = m.rows();
    let pick = |scores: &mut dyn Iterator<Item = (usize, f64)>| {
        let mut best: Option<(usize, f64)> = None;
        for (k, v) in scores {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        best.expect("n >= 2 leaves a candidate").0
    };
    let hardest_caption = (0..n)
        .map(|i| pick(&mut (0..n).filter(|&j| j != i).map(|j| (j, m[(i, j)]))))
        .collect();
    let hardest_image = (0..n)
        .map(|c| pick(&mut (0..n).filter(|&j| j != c).map(|j| (j, m[(j, c)]))))
        .collect();
    MinedNegatives {
        hardest_caption,
        hardest_image,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_argmax_skips_positive() {
        let s = Matrix::from_rows(&[[0.9, 0.6, 0.1], [0.2, 0.8, 0.3], [0.1, 0.2, 0.7]]);
        let m = mine_hardest_self(&s).unwrap();
        assert_eq!(m.hardest_caption, vec![1, 2, 1]);
        assert_eq!(m.hardest_image, vec![1, 0, 1]);
    }

    #[test]
    fn ties_break_low() {
        let s = Matrix::from_rows(&[[0.0, 0.5, 0.0], [0.5, 0.9, 0.5], [0.0, 0.0, 0.0]]);
        let m = mine_hardest_self(&s).unwrap();
        assert_eq!(m.hardest_caption[1], 0);
    }

    #[test]
    fn equal_matrices_mine_lowest_off_diagonal() {
        let s = Matrix::from_rows(&[[0.3, -0.2, 0.4], [0.1, 0.2, 0.9], [0.0, 0.5, 0.7]]);
        let m = mine_hardest_diff(&s, &s).unwrap();
        assert_eq!(m.hardest_caption, vec![1, 0, 0]);
        assert_eq!(m.hardest_image, vec![1, 0, 0]);
    }

    #[test]
    fn zero_anchor_matches_self_mining() {
        let s = Matrix::from_rows(&[[0.3, -0.2, 0.4], [0.1, 0.2, 0.9], [0.0, 0.5, 0.7]]);
        assert_eq!(
            mine_hardest_diff(&s, &Matrix::zeros(3, 3)).unwrap(),
            mine_hardest_self(&s).unwrap()
        );
    }

    #[test]
    fn margin_of_mining() {
        let s = Matrix::from_rows(&[[0.9, 0.6, 0.1], [0.2, 0.8, 0.3], [0.1, 0.2, 0.7]]);
        assert!((mining_margin(&s) - 0.1).abs() < 1e-12);
        assert_eq!(mining_margin(&Matrix::zeros(2, 2)), f64::INFINITY);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(mine_hardest_self(&Matrix::zeros(1, 1)).is_err());
        assert!(mine_hardest_self(&Matrix::zeros(2, 3)).is_err());
        assert!(mine_hardest_diff(&Matrix::zeros(2, 2), &Matrix::zeros(3, 3)).is_err());
    }
}
