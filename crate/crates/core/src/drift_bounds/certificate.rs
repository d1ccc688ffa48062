use serde::{Deserialize, Serialize};

use crate::block_matrix::{is_block_increasing, Block, BlockStochasticMatrix, BlockVector, ToeplitzTail};
use crate::error::{Error, Result};

pub const DEFAULT_VERIFY_TOLERANCE: f64 = 1e-10;

/// Level profile of a Lyapunov vector before the boundary shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovShape {
    /// Values on finitely many levels.
    Explicit(BlockVector),
    /// `alpha^k * base(i)` on every level.
    Geometric { alpha: f64, base: Vec<f64> },
}

/// `v(k, i) = shape(k, i) + shift * [k >= 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovVector {
    pub shape: LyapunovShape,
    #[serde(default)]
    pub shift: f64,
}

impl LyapunovVector {
    pub fn explicit(v: BlockVector) -> Self {
        Self {
            shape: LyapunovShape::Explicit(v),
            shift: 0.0,
        }
    }

    pub fn geometric(alpha: f64, base: Vec<f64>) -> Self {
        Self {
            shape: LyapunovShape::Geometric { alpha, base },
            shift: 0.0,
        }
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift += shift;
        self
    }

    pub fn d(&self) -> usize {
        match &self.shape {
            LyapunovShape::Explicit(v) => v.d(),
            LyapunovShape::Geometric { base, .. } => base.len(),
        }
    }

    /// Last level with a value, `None` for closed forms.
    pub fn max_level(&self) -> Option<usize> {
        match &self.shape {
            LyapunovShape::Explicit(v) => Some(v.levels() - 1),
            LyapunovShape::Geometric { .. } => None,
        }
    }

    pub fn value(&self, k: usize, i: usize) -> Option<f64> {
        let raw = match &self.shape {
            LyapunovShape::Explicit(v) => {
                if k >= v.levels() {
                    return None;
                }
                v.get(k, i)
            }
            LyapunovShape::Geometric { alpha, base } => alpha.powi(k as i32) * base[i],
        };
        Some(if k >= 1 { raw + self.shift } else { raw })
    }

    pub fn level(&self, k: usize) -> Option<Vec<f64>> {
        (0..self.d()).map(|i| self.value(k, i)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.shift < 0.0 || !self.shift.is_finite() {
            return Err(Error::Certificate(format!("shift {} < 0", self.shift)));
        }
        match &self.shape {
            LyapunovShape::Explicit(v) => {
                if let Some(x) = v.as_slice().iter().find(|&&x| x < 1.0) {
                    return Err(Error::Certificate(format!("v has entry {x} < 1")));
                }
                if !is_block_increasing(v) {
                    return Err(Error::Certificate("v is not block-increasing".into()));
                }
            }
            LyapunovShape::Geometric { alpha, base } => {
                if !(*alpha >= 1.0 && alpha.is_finite()) {
                    return Err(Error::Certificate(format!("growth factor {alpha} < 1")));
                }
                if base.is_empty() || base.iter().any(|&x| !(x >= 1.0 && x.is_finite())) {
                    return Err(Error::Certificate("base vector must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// A witness `P v <= gamma v + b 1_K` of geometric drift, where `1_K` is the
/// indicator of the levels `0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CertificateFields", into = "CertificateFields")]
pub struct DriftCertificate {
    v: LyapunovVector,
    gamma: f64,
    b: f64,
    boundary_level: usize,
}

#[derive(Serialize, Deserialize)]
struct CertificateFields {
    v: LyapunovVector,
    gamma: f64,
    b: f64,
    #[serde(rename = "K", default)]
    boundary_level: usize,
}

impl TryFrom<CertificateFields> for DriftCertificate {
    type Error = Error;

    fn try_from(f: CertificateFields) -> Result<Self> {
        DriftCertificate::new(f.v, f.gamma, f.b, f.boundary_level)
    }
}

impl From<DriftCertificate> for CertificateFields {
    fn from(c: DriftCertificate) -> Self {
        CertificateFields {
            v: c.v,
            gamma: c.gamma,
            b: c.b,
            boundary_level: c.boundary_level,
        }
    }
}

impl DriftCertificate {
    pub fn new(v: LyapunovVector, gamma: f64, b: f64, boundary_level: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Certificate(format!("gamma = {gamma} is not in (0, 1)")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Certificate(format!("b = {b} is not positive")));
        }
        v.validate()?;
        Ok(Self {
            v,
            gamma,
            b,
            boundary_level,
        })
    }

    pub fn v(&self) -> &LyapunovVector {
        &self.v
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `K`: the drift inequality may add `b` on levels `0..=K`.
    pub fn boundary_level(&self) -> usize {
        self.boundary_level
    }

    pub fn d(&self) -> usize {
        self.v.d()
    }

    /// `b / (1 - gamma)`.
    pub fn scale(&self) -> f64 {
        self.b / (1.0 - self.gamma)
    }
}

/// One row `(k, i)` where `(P v)(k, i)` exceeds `gamma v(k, i) + b 1_K`.
/// `k = None` marks the analytically checked tail.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftViolation {
    pub k: Option<usize>,
    pub i: usize,
    pub lhs: f64,
    pub rhs: f64,
}

impl DriftViolation {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftCheck {
    pub rows_checked: usize,
    pub tail_checked: bool,
    pub violations: Vec<DriftViolation>,
}

impl DriftCheck {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn a_hat_times(tail: &ToeplitzTail, alpha: f64, x: &[f64]) -> Vec<f64> {
    let d = tail.d();
    let mut m = Block::zeros(d, d);
    for (&off, a) in tail.a() {
        m += a * alpha.powi(off as i32);
    }
    let x = nalgebra::DVector::from_column_slice(x);
    (m * x).iter().copied().collect()
}

/// Row-by-row check of the drift inequality on every stored row of `P`.
///
/// Comparisons use `tol * v(k, i)` of slack, so large Lyapunov values are
/// judged relative to their own rounding. A GI/G/1 tail is checked in closed
/// form beyond the last explicitly checked row, which requires a geometric
/// `v`.
pub fn verify_certificate(
    p: &BlockStochasticMatrix,
    cert: &DriftCertificate,
    tol: f64,
) -> Result<DriftCheck> {
    let d = p.d();
    if cert.d() != d {
        return Err(Error::Dimension(format!(
            "certificate has {} phases, matrix {d}",
            cert.d()
        )));
    }
    let v = cert.v();
    let rows = match p.tail() {
        None => p.levels(),
        Some(t) => {
            if v.max_level().is_some() {
                return Err(Error::Certificate(
                    "an infinite matrix needs a closed-form Lyapunov vector".into(),
                ));
            }
            p.levels().max(t.reach()).max(cert.boundary_level() + 1) + 1
        }
    };
    let mut violations = Vec::new();
    let mut lhs = vec![0.0; d];
    for k in 0..rows {
        let row = p.row(k).expect("row within check horizon");
        lhs.iter_mut().for_each(|x| *x = 0.0);
        for (&l, m) in row.iter() {
            let vl = v.level(l).ok_or_else(|| {
                Error::Certificate(format!(
                    "v is defined up to level {:?}, row {k} reaches level {l}",
                    v.max_level()
                ))
            })?;
            for i in 0..d {
                lhs[i] += (0..d).map(|j| m[(i, j)] * vl[j]).sum::<f64>();
            }
        }
        let vk = v.level(k).ok_or_else(|| {
            Error::Certificate(format!("v is undefined at row level {k}"))
        })?;
        let bonus = if k <= cert.boundary_level() { cert.b() } else { 0.0 };
        for i in 0..d {
            let rhs = cert.gamma() * vk[i] + bonus;
            if lhs[i] > rhs + tol * vk[i] {
                violations.push(DriftViolation {
                    k: Some(k),
                    i,
                    lhs: lhs[i],
                    rhs,
                });
            }
        }
    }
    let mut tail_checked = false;
    if let (Some(tail), LyapunovShape::Geometric { alpha, base }) = (p.tail(), &v.shape) {
        // Past the horizon, row k gives alpha^k (A(alpha) base - gamma base)
        // + shift (1 - gamma), which is non-increasing in k exactly when the
        // bracket is non-positive.
        let ab = a_hat_times(tail, *alpha, base);
        for i in 0..d {
            let c = ab[i] - cert.gamma() * base[i];
            if c > tol * base[i] {
                violations.push(DriftViolation {
                    k: None,
                    i,
                    lhs: ab[i],
                    rhs: cert.gamma() * base[i],
                });
            }
        }
        tail_checked = true;
    }
    Ok(DriftCheck {
        rows_checked: rows,
        tail_checked,
        violations,
    })
}

/// Turns a drift inequality with boundary set `0..=K` into one with
/// boundary `{0}` by adding `B` to `v` above level 0, where `B` is the
/// smallest value with `B * P(K; 0) e >= b' e`.
pub fn lift_certificate(
    vprime: LyapunovVector,
    gamma_prime: f64,
    b_prime: f64,
    boundary_level: usize,
    boundary_block: &Block,
) -> Result<DriftCertificate> {
    if !(gamma_prime > 0.0 && gamma_prime < 1.0) {
        return Err(Error::Certificate(format!(
            "gamma' = {gamma_prime} is not in (0, 1)"
        )));
    }
    if !(b_prime > 0.0 && b_prime.is_finite()) {
        return Err(Error::Certificate(format!("b' = {b_prime} is not positive")));
    }
    if boundary_block.nrows() != vprime.d() || boundary_block.ncols() != vprime.d() {
        return Err(Error::Dimension("boundary block shape".into()));
    }
    let min_exit = (0..boundary_block.nrows())
        .map(|i| boundary_block.row(i).sum())
        .fold(f64::INFINITY, f64::min);
    if !(min_exit > 0.0) {
        return Err(Error::Certificate(format!(
            "level {boundary_level} has a phase that cannot jump to level 0"
        )));
    }
    let lift = b_prime / min_exit;
    let gamma = (gamma_prime + lift) / (1.0 + lift);
    let b = b_prime + lift;
    DriftCertificate::new(vprime.with_shift(lift), gamma, b, 0)
}
