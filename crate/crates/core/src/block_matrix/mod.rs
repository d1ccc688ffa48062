//! Block-partitioned stochastic matrices over the level-phase state space
//! `{0, 1, ...} x {0, .., d-1}`.
//!
//! A matrix stores finitely many block rows explicitly. Infinite chains of
//! GI/G/1 type additionally carry a [`ToeplitzTail`] that generates every row
//! beyond the stored ones, so the operations here never need an infinite
//! array. Block `(k, l)` is the `d x d` matrix `P(k; l)` of transition
//! probabilities from level `k` to level `l`.

mod order;
mod phase;
mod stationary;
mod truncate;
mod vector;

use std::borrow::Cow;
use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use order::{
    block_dominates, find_dominance_violation, find_monotonicity_violation, is_block_increasing,
    is_block_monotone, vector_dominates, SuffixViolation,
};
pub use phase::{phase_matrix, transient_distribution, PhaseMatrix};
pub use stationary::{closed_classes, gth_solve, stationary};
pub use truncate::{lcb_augment, lcb_truncate};
pub use vector::{tv_distance, v_norm_distance, BlockVector};

/// A `d x d` block.
pub type Block = DMatrix<f64>;

/// One block row: column level -> block. Absent columns are zero.
pub type BlockRow = BTreeMap<usize, Block>;

pub const DEFAULT_ROW_TOLERANCE: f64 = 1e-9;

/// Rows beyond the stored corner of a GI/G/1-type chain.
///
/// Row `k >= 1` has `B(-k)` in column 0 and `A(l - k)` in column `l >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzTail {
    d: usize,
    a: BTreeMap<i64, Block>,
    down: BTreeMap<usize, Block>,
}

impl ToeplitzTail {
    /// `a` maps offsets to `A(offset)`; `down` maps `k >= 1` to `B(-k)`.
    pub fn new(d: usize, a: BTreeMap<i64, Block>, down: BTreeMap<usize, Block>) -> Result<Self> {
        for (name, m) in a
            .iter()
            .map(|(o, m)| (format!("A({o})"), m))
            .chain(down.iter().map(|(k, m)| (format!("B(-{k})"), m)))
        {
            check_block_shape(d, m, &name)?;
        }
        if down.contains_key(&0) {
            return Err(Error::InvalidArgument(
                "tail boundary blocks are indexed from k = 1".into(),
            ));
        }
        Ok(Self { d, a, down })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn a(&self) -> &BTreeMap<i64, Block> {
        &self.a
    }

    pub fn down(&self) -> &BTreeMap<usize, Block> {
        &self.down
    }

    /// Largest downward jump of the A-sequence.
    pub fn lower_width(&self) -> usize {
        self.a
            .keys()
            .next()
            .map(|&o| if o < 0 { (-o) as usize } else { 0 })
            .unwrap_or(0)
    }

    /// Largest upward jump of the A-sequence.
    pub fn upper_width(&self) -> usize {
        self.a
            .keys()
            .next_back()
            .map(|&o| o.max(0) as usize)
            .unwrap_or(0)
    }

    /// First level from which every row is an exact shift of the previous one.
    pub fn reach(&self) -> usize {
        let boundary = self.down.keys().next_back().copied().unwrap_or(0);
        boundary.max(self.lower_width()) + 1
    }

    /// Generated row `k >= 1`.
    pub fn row(&self, k: usize) -> BlockRow {
        assert!(k >= 1, "tail rows start at level 1");
        let mut row = BlockRow::new();
        if let Some(b) = self.down.get(&k) {
            row.insert(0, b.clone());
        }
        for (&off, m) in &self.a {
            let col = k as i64 + off;
            if col >= 1 {
                row.insert(col as usize, m.clone());
            }
        }
        row
    }
}

/// Block-partitioned (sub)stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStochasticMatrix {
    d: usize,
    rows: Vec<BlockRow>,
    tail: Option<ToeplitzTail>,
    row_tolerance: f64,
    substochastic: bool,
}

impl BlockStochasticMatrix {
    /// Finite stochastic matrix with `rows.len()` levels. Every column index
    /// must be a stored level.
    pub fn new(d: usize, rows: Vec<BlockRow>) -> Result<Self> {
        Self::build(d, rows, None, DEFAULT_ROW_TOLERANCE, false)
    }

    /// Finite matrix whose rows may lose mass.
    pub fn new_substochastic(d: usize, rows: Vec<BlockRow>) -> Result<Self> {
        Self::build(d, rows, None, DEFAULT_ROW_TOLERANCE, true)
    }

    /// Stored corner plus a generator for all rows beyond it. Stored rows may
    /// reference columns past the corner.
    pub fn with_tail(d: usize, rows: Vec<BlockRow>, tail: ToeplitzTail) -> Result<Self> {
        if tail.d() != d {
            return Err(Error::Dimension(format!(
                "tail has phase count {}, matrix {d}",
                tail.d()
            )));
        }
        Self::build(d, rows, Some(tail), DEFAULT_ROW_TOLERANCE, false)
    }

    /// Stochastic matrix with an explicit row-sum tolerance and optional tail.
    pub fn with_parts(
        d: usize,
        rows: Vec<BlockRow>,
        tail: Option<ToeplitzTail>,
        row_tolerance: f64,
    ) -> Result<Self> {
        if let Some(t) = &tail {
            if t.d() != d {
                return Err(Error::Dimension(format!(
                    "tail has phase count {}, matrix {d}",
                    t.d()
                )));
            }
        }
        Self::build(d, rows, tail, row_tolerance, false)
    }

    /// Builds a matrix from `(k, l, block)` triples; repeated positions add up.
    pub fn from_blocks(
        d: usize,
        levels: usize,
        blocks: impl IntoIterator<Item = (usize, usize, Block)>,
    ) -> Result<Self> {
        let mut rows = vec![BlockRow::new(); levels];
        for (k, l, m) in blocks {
            if k >= levels {
                return Err(Error::LevelOutOfRange {
                    requested: k,
                    max: levels.saturating_sub(1),
                });
            }
            check_block_shape(d, &m, &format!("P({k};{l})"))?;
            match rows[k].get_mut(&l) {
                Some(existing) => *existing += m,
                None => {
                    rows[k].insert(l, m);
                }
            }
        }
        Self::new(d, rows)
    }

    /// Reads a dense `(levels * d) x (levels * d)` matrix in level-major order.
    pub fn from_dense(d: usize, dense: &DMatrix<f64>) -> Result<Self> {
        let rows = dense_to_rows(d, dense)?;
        Self::new(d, rows)
    }

    pub fn from_dense_substochastic(d: usize, dense: &DMatrix<f64>) -> Result<Self> {
        let rows = dense_to_rows(d, dense)?;
        Self::new_substochastic(d, rows)
    }

    pub fn with_row_tolerance(mut self, tol: f64) -> Result<Self> {
        self.row_tolerance = tol;
        self.validate()?;
        Ok(self)
    }

    fn build(
        d: usize,
        rows: Vec<BlockRow>,
        tail: Option<ToeplitzTail>,
        row_tolerance: f64,
        substochastic: bool,
    ) -> Result<Self> {
        let m = Self {
            d,
            rows,
            tail,
            row_tolerance,
            substochastic,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Dimension("phase count must be positive".into()));
        }
        if self.rows.is_empty() {
            return Err(Error::Dimension("at least one level is required".into()));
        }
        let levels = self.rows.len();
        for (k, row) in self.rows.iter().enumerate() {
            for (&l, m) in row {
                check_block_shape(self.d, m, &format!("P({k};{l})"))?;
                if self.tail.is_none() && l >= levels {
                    return Err(Error::LevelOutOfRange {
                        requested: l,
                        max: levels - 1,
                    });
                }
                for i in 0..self.d {
                    for j in 0..self.d {
                        let value = m[(i, j)];
                        if !value.is_finite() || value < 0.0 {
                            return Err(Error::NegativeEntry { k, l, i, j, value });
                        }
                    }
                }
            }
            for (i, sum) in row_sums(self.d, row).into_iter().enumerate() {
                let excess = sum - 1.0;
                let bad = if self.substochastic {
                    excess > self.row_tolerance
                } else {
                    excess.abs() > self.row_tolerance
                };
                if bad {
                    return Err(Error::NotStochastic { k, i, sum });
                }
            }
        }
        if let Some(tail) = &self.tail {
            for (name, m) in tail.a.iter().map(|(o, m)| (format!("A({o})"), m)).chain(
                tail.down.iter().map(|(k, m)| (format!("B(-{k})"), m)),
            ) {
                if m.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "tail block {name} has a negative entry"
                    )));
                }
            }
            for k in levels.max(1)..=levels.max(tail.reach()) {
                for (i, sum) in row_sums(self.d, &tail.row(k)).into_iter().enumerate() {
                    if (sum - 1.0).abs() > self.row_tolerance {
                        return Err(Error::NotStochastic { k, i, sum });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of stored block rows.
    pub fn levels(&self) -> usize {
        self.rows.len()
    }

    pub fn num_states(&self) -> usize {
        self.rows.len() * self.d
    }

    pub fn tail(&self) -> Option<&ToeplitzTail> {
        self.tail.as_ref()
    }

    pub fn row_tolerance(&self) -> f64 {
        self.row_tolerance
    }

    pub fn is_substochastic(&self) -> bool {
        self.substochastic
    }

    /// True when the matrix is a finite square array (no generated rows).
    pub fn is_finite(&self) -> bool {
        self.tail.is_none()
    }

    pub fn stored_rows(&self) -> &[BlockRow] {
        &self.rows
    }

    /// Block row `k`, generated from the tail when `k` is past the stored
    /// corner. `None` when `k` is not representable.
    pub fn row(&self, k: usize) -> Option<Cow<'_, BlockRow>> {
        if k < self.rows.len() {
            Some(Cow::Borrowed(&self.rows[k]))
        } else {
            self.tail.as_ref().map(|t| Cow::Owned(t.row(k)))
        }
    }

    /// Highest level with a representable row, `None` when unbounded.
    pub fn max_level(&self) -> Option<usize> {
        match self.tail {
            Some(_) => None,
            None => Some(self.rows.len() - 1),
        }
    }

    pub fn block(&self, k: usize, l: usize) -> Option<Block> {
        self.row(k).and_then(|r| r.get(&l).cloned())
    }

    pub fn entry(&self, k: usize, i: usize, l: usize, j: usize) -> f64 {
        self.row(k)
            .and_then(|r| r.get(&l).map(|m| m[(i, j)]))
            .unwrap_or(0.0)
    }

    /// Dense level-major copy of a finite matrix.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if !self.is_finite() {
            return Err(Error::InvalidArgument(
                "cannot densify a matrix with a generated tail".into(),
            ));
        }
        let n = self.num_states();
        let d = self.d;
        let mut out = DMatrix::zeros(n, n);
        for (k, row) in self.rows.iter().enumerate() {
            for (&l, m) in row {
                out.view_mut((k * d, l * d), (d, d)).copy_from(m);
            }
        }
        Ok(out)
    }

    /// Row vector-matrix product `x P` for a finite matrix.
    pub fn left_mul(&self, x: &BlockVector) -> Result<BlockVector> {
        if !self.is_finite() {
            return Err(Error::InvalidArgument(
                "left multiplication needs a finite matrix".into(),
            ));
        }
        if x.d() != self.d {
            return Err(Error::Dimension(format!(
                "vector phase count {} vs matrix {}",
                x.d(),
                self.d
            )));
        }
        let d = self.d;
        let mut out = vec![0.0; self.num_states()];
        for (k, row) in self.rows.iter().enumerate().take(x.levels()) {
            let xk = x.level(k);
            if xk.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (&l, m) in row {
                for i in 0..d {
                    if xk[i] == 0.0 {
                        continue;
                    }
                    for j in 0..d {
                        out[l * d + j] += xk[i] * m[(i, j)];
                    }
                }
            }
        }
        BlockVector::from_flat(d, out)
    }
}

pub(crate) fn check_block_shape(d: usize, m: &Block, name: &str) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {d}x{d}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn row_sums(d: usize, row: &BlockRow) -> Vec<f64> {
    let mut sums = vec![0.0; d];
    for m in row.values() {
        for (i, s) in sums.iter_mut().enumerate() {
            *s += m.row(i).sum();
        }
    }
    sums
}

fn dense_to_rows(d: usize, dense: &DMatrix<f64>) -> Result<Vec<BlockRow>> {
    if d == 0 || dense.nrows() != dense.ncols() || !dense.nrows().is_multiple_of(d) {
        return Err(Error::Dimension(format!(
            "dense matrix {}x{} is not a square multiple of d = {d}",
            dense.nrows(),
            dense.ncols()
        )));
    }
    let levels = dense.nrows() / d;
    let mut rows = vec![BlockRow::new(); levels];
    for (k, row) in rows.iter_mut().enumerate() {
        for l in 0..levels {
            let m = dense.view((k * d, l * d), (d, d)).into_owned();
            if m.iter().any(|&x| x != 0.0) {
                row.insert(l, m);
            }
        }
    }
    Ok(rows)
}
