use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Level-indexed vector with `d` phases per level, stored level-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VectorFile", into = "VectorFile")]
pub struct BlockVector {
    d: usize,
    data: Vec<f64>,
}

/// On-disk shape: `{ "d": int, "entries": [[...], ...] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct VectorFile {
    d: usize,
    entries: Vec<Vec<f64>>,
}

impl TryFrom<VectorFile> for BlockVector {
    type Error = Error;

    fn try_from(f: VectorFile) -> Result<Self> {
        BlockVector::new(f.d, f.entries)
    }
}

impl From<BlockVector> for VectorFile {
    fn from(v: BlockVector) -> Self {
        VectorFile {
            d: v.d,
            entries: v.data.chunks(v.d).map(<[f64]>::to_vec).collect(),
        }
    }
}

impl BlockVector {
    pub fn new(d: usize, entries: Vec<Vec<f64>>) -> Result<Self> {
        if let Some((k, e)) = entries.iter().enumerate().find(|(_, e)| e.len() != d) {
            return Err(Error::Dimension(format!(
                "level {k} has {} entries, expected {d}",
                e.len()
            )));
        }
        Self::from_flat(d, entries.concat())
    }

    pub fn from_flat(d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 || !data.len().is_multiple_of(d) {
            return Err(Error::Dimension(format!(
                "length {} is not a multiple of d = {d}",
                data.len()
            )));
        }
        if let Some(x) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite entry {x}")));
        }
        Ok(Self { d, data })
    }

    pub fn zeros(d: usize, levels: usize) -> Self {
        Self {
            d,
            data: vec![0.0; d * levels],
        }
    }

    pub fn constant(d: usize, levels: usize, value: f64) -> Self {
        Self {
            d,
            data: vec![value; d * levels],
        }
    }

    /// Unit mass at `(k, i)`.
    pub fn point_mass(d: usize, levels: usize, k: usize, i: usize) -> Self {
        let mut v = Self::zeros(d, levels);
        v.data[k * d + i] = 1.0;
        v
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn levels(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Entry `(k, i)`; zero past the stored levels.
    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.data.get(k * self.d + i).copied().unwrap_or(0.0)
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.data[k * self.d..(k + 1) * self.d]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Per-phase sums over all levels.
    pub fn phase_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for chunk in self.data.chunks(self.d) {
            for (o, x) in out.iter_mut().zip(chunk) {
                *o += x;
            }
        }
        out
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        self.data.iter().all(|&x| x >= -tol) && (self.total() - 1.0).abs() <= tol
    }

    pub(crate) fn require_probability(&self, tol: f64, name: &str) -> Result<()> {
        if self.is_probability(tol) {
            Ok(())
        } else {
            Err(Error::NotProbability(format!(
                "{name}: total {} or negative entry",
                self.total()
            )))
        }
    }

    /// Block suffix sums `sum_{m >= l} x(m, i)` for `l` in `0..len`.
    pub(crate) fn suffix_sums(&self, len: usize) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; len * d];
        let mut acc = vec![0.0; d];
        for l in (0..len.max(self.levels())).rev() {
            for i in 0..d {
                acc[i] += self.get(l, i);
            }
            if l < len {
                out[l * d..(l + 1) * d].copy_from_slice(&acc);
            }
        }
        out
    }
}

/// `sum_{(k,i)} |x(k,i) - y(k,i)|`; the shorter vector is zero-padded.
pub fn tv_distance(x: &BlockVector, y: &BlockVector) -> f64 {
    assert_eq!(x.d(), y.d(), "phase counts differ");
    let n = x.data.len().max(y.data.len());
    (0..n)
        .map(|s| {
            let a = x.data.get(s).copied().unwrap_or(0.0);
            let b = y.data.get(s).copied().unwrap_or(0.0);
            (a - b).abs()
        })
        .sum()
}

/// Weighted distance `sum |x - y| v`, the `v`-norm of the signed measure
/// `x - y`. Requires `v >= 1` on every state where `x` or `y` lives.
pub fn v_norm_distance(x: &BlockVector, y: &BlockVector, v: &BlockVector) -> Result<f64> {
    if x.d() != y.d() || x.d() != v.d() {
        return Err(Error::Dimension("phase counts differ".into()));
    }
    let n = x.data.len().max(y.data.len());
    if v.data.len() < n {
        return Err(Error::Dimension(format!(
            "weight covers {} states, need {n}",
            v.data.len()
        )));
    }
    if let Some(pos) = v.data.iter().position(|&w| w < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "weight {} < 1 at state ({}, {})",
            v.data[pos],
            pos / v.d,
            pos % v.d
        )));
    }
    Ok((0..n)
        .map(|s| {
            let a = x.data.get(s).copied().unwrap_or(0.0);
            let b = y.data.get(s).copied().unwrap_or(0.0);
            (a - b).abs() * v.data[s]
        })
        .sum())
}
