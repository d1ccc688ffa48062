use super::{BlockRow, BlockStochasticMatrix};
use crate::error::{Error, Result};

/// Folds every column `>= n` of a row into column `n`.
fn fold_row(row: &BlockRow, n: usize) -> BlockRow {
    let mut out = BlockRow::new();
    for (&l, m) in row {
        let col = l.min(n);
        match out.get_mut(&col) {
            Some(acc) => *acc += m,
            None => {
                out.insert(col, m.clone());
            }
        }
    }
    out
}

/// Last-column-block-augmented truncation: the `(n + 1)`-level corner in
/// which column block `n` absorbs all mass bound for levels `>= n`.
///
/// Infinite inputs must carry a tail; finite inputs need `n` within their
/// stored levels.
pub fn lcb_truncate(p: &BlockStochasticMatrix, n: usize) -> Result<BlockStochasticMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("truncation level must be >= 1".into()));
    }
    if let Some(max) = p.max_level() {
        if n > max {
            return Err(Error::LevelOutOfRange { requested: n, max });
        }
    }
    let rows = (0..=n)
        .map(|k| fold_row(&p.row(k).expect("row is representable"), n))
        .collect();
    BlockStochasticMatrix::with_parts(p.d(), rows, None, p.row_tolerance())
}

/// The same truncation kept at the full stored size of a finite `P`: every
/// row, including those above `n`, has its mass beyond `n` folded into
/// column `n`. Useful for comparing truncations of different orders.
pub fn lcb_augment(p: &BlockStochasticMatrix, n: usize) -> Result<BlockStochasticMatrix> {
    if !p.is_finite() {
        return Err(Error::InvalidArgument(
            "full-size augmentation needs a finite matrix".into(),
        ));
    }
    if n == 0 || n >= p.levels() {
        return Err(Error::LevelOutOfRange {
            requested: n,
            max: p.levels() - 1,
        });
    }
    let rows = p.stored_rows().iter().map(|r| fold_row(r, n)).collect();
    BlockStochasticMatrix::with_parts(p.d(), rows, None, p.row_tolerance())
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::{block_dominates, is_block_monotone};
    use super::*;

    #[test]
    fn birth_death_n2() {
        let t = lcb_truncate(&birth_death_infinite(), 2).unwrap();
        let expect = [[0.6, 0.4, 0.0], [0.6, 0.0, 0.4], [0.0, 0.6, 0.4]];
        for (k, row) in expect.iter().enumerate() {
            for (l, &x) in row.iter().enumerate() {
                assert!((t.entry(k, 0, l, 0) - x).abs() < 1e-15, "({k},{l})");
            }
        }
        // Same corner from a finite representation.
        assert_eq!(lcb_truncate(&birth_death(10), 2).unwrap(), t);
    }

    #[test]
    fn already_supported_is_identity() {
        let p = birth_death(4);
        assert_eq!(lcb_truncate(&p, 3).unwrap(), p);
    }

    #[test]
    fn folds_tail_mass() {
        let p = scalar(&[
            &[0.1, 0.2, 0.3, 0.4],
            &[0.3, 0.3, 0.2, 0.2],
            &[0.25, 0.25, 0.25, 0.25],
            &[0.0, 0.0, 0.5, 0.5],
        ]);
        let t = lcb_truncate(&p, 2).unwrap();
        // Column 2 of row 0 gets 0.3 + 0.4.
        assert!((t.entry(0, 0, 2, 0) - 0.7).abs() < 1e-15);
        assert!((t.entry(1, 0, 2, 0) - 0.4).abs() < 1e-15);
        assert!((t.entry(2, 0, 2, 0) - 0.5).abs() < 1e-15);
        assert_eq!(t.levels(), 3);
    }

    #[test]
    fn errors() {
        let p = birth_death(4);
        assert!(lcb_truncate(&p, 0).is_err());
        assert!(matches!(
            lcb_truncate(&p, 4),
            Err(Error::LevelOutOfRange { requested: 4, max: 3 })
        ));
        assert!(lcb_augment(&birth_death_infinite(), 2).is_err());
    }

    #[test]
    fn augmented_family_is_ordered() {
        let p = birth_death(12);
        for n in 1..11 {
            let a = lcb_augment(&p, n).unwrap();
            let b = lcb_augment(&p, n + 1).unwrap();
            assert!(is_block_monotone(&a, 1e-12));
            assert!(block_dominates(&a, &b, 1e-12).unwrap());
            assert!(block_dominates(&a, &p, 1e-12).unwrap());
        }
    }
}
