//! Block-monotonicity and block-wise dominance, checked with block suffix
//! sums `sum_{m >= l} p(k, i; m, j)` rather than products with the
//! lower-triangular summation matrix.

use super::{BlockRow, BlockStochasticMatrix, BlockVector};
use crate::error::{Error, Result};

/// Where a suffix-sum comparison failed: row level `k` (the lower row for
/// monotonicity), column level `l`, phases `(i, j)`, and by how much.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuffixViolation {
    pub k: usize,
    pub l: usize,
    pub i: usize,
    pub j: usize,
    pub excess: f64,
}

fn max_col(row: &BlockRow) -> usize {
    row.keys().next_back().copied().unwrap_or(0)
}

/// Suffix sums of one block row for `l` in `0..len`, laid out `[l][i][j]`.
fn row_suffix(d: usize, row: &BlockRow, len: usize) -> Vec<f64> {
    let dd = d * d;
    let mut out = vec![0.0; len * dd];
    let mut acc = vec![0.0; dd];
    let top = len.max(max_col(row) + 1);
    for l in (0..top).rev() {
        if let Some(m) = row.get(&l) {
            for i in 0..d {
                for j in 0..d {
                    acc[i * d + j] += m[(i, j)];
                }
            }
        }
        if l < len {
            out[l * dd..(l + 1) * dd].copy_from_slice(&acc);
        }
    }
    out
}

/// First `(l, i, j)` with `suffix(lo) > suffix(hi) + tol`.
fn compare_rows(
    d: usize,
    k: usize,
    lo: &BlockRow,
    hi: &BlockRow,
    tol: f64,
) -> Option<SuffixViolation> {
    let len = max_col(lo).max(max_col(hi)) + 1;
    let a = row_suffix(d, lo, len);
    let b = row_suffix(d, hi, len);
    let dd = d * d;
    a.iter()
        .zip(&b)
        .enumerate()
        .find(|(_, (x, y))| **x > **y + tol)
        .map(|(idx, (x, y))| SuffixViolation {
            k,
            l: idx / dd,
            i: (idx % dd) / d,
            j: idx % d,
            excess: x - y,
        })
}

/// Number of leading rows whose comparison decides a property for the whole
/// (possibly infinite) matrix.
fn rows_to_check(s: &BlockStochasticMatrix) -> usize {
    match s.tail() {
        None => s.levels(),
        Some(t) => s.levels().max(t.reach()) + 2,
    }
}

/// First violation of block-monotonicity, if any.
pub fn find_monotonicity_violation(
    s: &BlockStochasticMatrix,
    tol: f64,
) -> Option<SuffixViolation> {
    let n = rows_to_check(s);
    let mut prev = s.row(0).expect("level 0 always exists");
    for k in 0..n.saturating_sub(1) {
        let next = s.row(k + 1).expect("rows below the check horizon exist");
        if let Some(v) = compare_rows(s.d(), k, &prev, &next, tol) {
            return Some(v);
        }
        prev = next;
    }
    None
}

/// Whether the block suffix sums of every row are non-decreasing in the row
/// level. Rows past a tail's reach are shifts of each other, so the check is
/// finite for GI/G/1 tails as well.
pub fn is_block_monotone(s: &BlockStochasticMatrix, tol: f64) -> bool {
    find_monotonicity_violation(s, tol).is_none()
}

fn check_same_shape(p1: &BlockStochasticMatrix, p2: &BlockStochasticMatrix) -> Result<()> {
    if p1.d() != p2.d() {
        return Err(Error::Dimension(format!(
            "phase counts {} and {}",
            p1.d(),
            p2.d()
        )));
    }
    let finite_mismatch = p1.is_finite() && p2.is_finite() && p1.levels() != p2.levels();
    if finite_mismatch || p1.is_finite() != p2.is_finite() {
        return Err(Error::Dimension(format!(
            "level structures differ ({} vs {} stored levels)",
            p1.levels(),
            p2.levels()
        )));
    }
    Ok(())
}

/// First row where `P1`'s suffix sums exceed `P2`'s.
pub fn find_dominance_violation(
    p1: &BlockStochasticMatrix,
    p2: &BlockStochasticMatrix,
    tol: f64,
) -> Result<Option<SuffixViolation>> {
    check_same_shape(p1, p2)?;
    let n = rows_to_check(p1).max(rows_to_check(p2));
    for k in 0..n {
        let (a, b) = (p1.row(k).unwrap(), p2.row(k).unwrap());
        if let Some(v) = compare_rows(p1.d(), k, &a, &b, tol) {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

/// `P1` is block-wise dominated by `P2`: every block suffix sum of `P1` is at
/// most the matching one of `P2`.
pub fn block_dominates(
    p1: &BlockStochasticMatrix,
    p2: &BlockStochasticMatrix,
    tol: f64,
) -> Result<bool> {
    Ok(find_dominance_violation(p1, p2, tol)?.is_none())
}

/// `mu` is block-wise dominated by `eta`.
pub fn vector_dominates(mu: &BlockVector, eta: &BlockVector, tol: f64) -> Result<bool> {
    if mu.d() != eta.d() {
        return Err(Error::Dimension("phase counts differ".into()));
    }
    let ptol = tol.max(1e-9);
    mu.require_probability(ptol, "mu")?;
    eta.require_probability(ptol, "eta")?;
    let len = mu.levels().max(eta.levels());
    let a = mu.suffix_sums(len);
    let b = eta.suffix_sums(len);
    Ok(a.iter().zip(&b).all(|(x, y)| *x <= *y + tol))
}

/// `f(k, i) <= f(k + 1, i)` for every stored level.
pub fn is_block_increasing(f: &BlockVector) -> bool {
    (1..f.levels()).all(|k| {
        f.level(k - 1)
            .iter()
            .zip(f.level(k))
            .all(|(a, b)| a <= b)
    })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn identity_is_monotone() {
        for d in 1..4 {
            let p = BlockStochasticMatrix::from_dense(d, &DMatrix::identity(3 * d, 3 * d)).unwrap();
            assert!(is_block_monotone(&p, 0.0));
        }
    }

    #[test]
    fn two_state_monotonicity() {
        assert!(is_block_monotone(&scalar(&[&[0.5, 0.5], &[0.3, 0.7]]), 0.0));
        let bad = scalar(&[&[0.3, 0.7], &[0.5, 0.5]]);
        assert!(!is_block_monotone(&bad, 0.0));
        let v = find_monotonicity_violation(&bad, 0.0).unwrap();
        assert_eq!((v.k, v.l), (0, 1));
        assert!((v.excess - 0.2).abs() < 1e-15);
    }

    #[test]
    fn infinite_birth_death_is_monotone() {
        assert!(is_block_monotone(&birth_death_infinite(), 0.0));
        assert!(is_block_monotone(&birth_death(6), 0.0));
    }

    #[test]
    fn matrix_dominance() {
        let low = scalar(&[&[1.0, 0.0], &[1.0, 0.0]]);
        let high = scalar(&[&[0.0, 1.0], &[0.0, 1.0]]);
        assert!(block_dominates(&low, &low, 0.0).unwrap());
        assert!(block_dominates(&low, &high, 0.0).unwrap());
        assert!(!block_dominates(&high, &low, 0.0).unwrap());
        let other = birth_death(3);
        assert!(matches!(
            block_dominates(&low, &other, 0.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn vector_dominance() {
        let a = BlockVector::from_flat(1, vec![1.0, 0.0]).unwrap();
        let b = BlockVector::from_flat(1, vec![0.0, 1.0]).unwrap();
        assert!(vector_dominates(&a, &a, 0.0).unwrap());
        assert!(vector_dominates(&a, &b, 0.0).unwrap());
        assert!(!vector_dominates(&b, &a, 0.0).unwrap());
        let not_prob = BlockVector::from_flat(1, vec![0.5, 0.1]).unwrap();
        assert!(matches!(
            vector_dominates(&not_prob, &a, 0.0),
            Err(Error::NotProbability(_))
        ));
    }

    #[test]
    fn block_increasing() {
        assert!(is_block_increasing(&BlockVector::constant(2, 4, 3.0)));
        let f = BlockVector::new(2, vec![vec![1.0, 5.0], vec![2.0, 4.0]]).unwrap();
        assert!(!is_block_increasing(&f));
        let g = BlockVector::from_flat(1, (0..10).map(|k| 1.3f64.powi(k)).collect()).unwrap();
        assert!(is_block_increasing(&g));
    }
}
