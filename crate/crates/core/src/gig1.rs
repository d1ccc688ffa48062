//! GI/G/1-type chains: the Perron root of `A(z) = sum_k z^k A(k)`, the
//! geometric drift vector `v'(k) = alpha^k v_A(alpha)` it induces, and the
//! resulting drift certificates.
//!
//! Block layout of `P`: row 0 holds `B(l)` in column `l >= 0`; row `k >= 1`
//! holds `B(-k)` in column 0 and `A(l - k)` in column `l >= 1`. All block
//! sequences have finite support.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block_matrix::{
    check_block_shape, gth_solve, is_block_monotone, Block, BlockRow, BlockStochasticMatrix,
    ToeplitzTail, DEFAULT_ROW_TOLERANCE,
};
use crate::drift_bounds::{
    lift_certificate, verify_certificate, DriftCertificate, DriftCheck, LyapunovVector,
    DEFAULT_VERIFY_TOLERANCE,
};
use crate::error::{Error, Result};

/// Floor that keeps `b'` strictly positive.
const B_PRIME_FLOOR: f64 = 1e-15;

/// Dense eigen-solves up to this size, power iteration above.
const DENSE_EIGEN_LIMIT: usize = 64;

fn is_nonzero(m: &Block) -> bool {
    m.iter().any(|&x| x != 0.0)
}

fn add_into(row: &mut BlockRow, col: usize, m: &Block) {
    match row.get_mut(&col) {
        Some(acc) => *acc += m,
        None => {
            row.insert(col, m.clone());
        }
    }
}

/// Block sequences `A(k)` and `B(k)` of a GI/G/1-type chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GIG1Model {
    d: usize,
    a: BTreeMap<i64, Block>,
    b: BTreeMap<i64, Block>,
    tol: f64,
}

impl GIG1Model {
    pub fn new(d: usize, a: BTreeMap<i64, Block>, b: BTreeMap<i64, Block>) -> Result<Self> {
        Self::with_tolerance(d, a, b, DEFAULT_ROW_TOLERANCE)
    }

    /// Validates that `A = sum_k A(k)` is stochastic and irreducible and
    /// that every row of the assembled chain sums to one within `tol`.
    pub fn with_tolerance(
        d: usize,
        a: BTreeMap<i64, Block>,
        b: BTreeMap<i64, Block>,
        tol: f64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::Dimension("phase count must be positive".into()));
        }
        for (name, m) in a
            .iter()
            .map(|(k, m)| (format!("A({k})"), m))
            .chain(b.iter().map(|(k, m)| (format!("B({k})"), m)))
        {
            check_block_shape(d, m, &name)?;
            if m.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidArgument(format!("{name} has a negative entry")));
            }
        }
        if a.is_empty() {
            return Err(Error::InvalidArgument("the A-sequence is empty".into()));
        }
        let model = Self { d, a, b, tol };
        let a_sum = model.a_sum();
        for i in 0..d {
            let sum = a_sum.row(i).sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "A = sum_k A(k) is not stochastic: row {i} sums to {sum}"
                )));
            }
        }
        if !is_irreducible(&a_sum) {
            return Err(Error::Reducible);
        }
        // Row 0 and every row until the layout becomes a pure shift.
        for k in 0..=model.boundary_depth() + 1 {
            let row = model.block_row(k);
            for i in 0..d {
                let sum: f64 = row.values().map(|m| m.row(i).sum()).sum();
                if (sum - 1.0).abs() > tol {
                    return Err(Error::NotStochastic { k, i, sum });
                }
            }
        }
        Ok(model)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn a(&self) -> &BTreeMap<i64, Block> {
        &self.a
    }

    pub fn b(&self) -> &BTreeMap<i64, Block> {
        &self.b
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// `A(k)`, zero outside the support.
    pub fn a_block(&self, k: i64) -> Block {
        self.a
            .get(&k)
            .cloned()
            .unwrap_or_else(|| Block::zeros(self.d, self.d))
    }

    /// `B(k)`, zero outside the support.
    pub fn b_block(&self, k: i64) -> Block {
        self.b
            .get(&k)
            .cloned()
            .unwrap_or_else(|| Block::zeros(self.d, self.d))
    }

    pub fn a_sum(&self) -> Block {
        self.a
            .values()
            .fold(Block::zeros(self.d, self.d), |acc, m| acc + m)
    }

    /// `L_A`: largest downward jump with a nonzero `A` block.
    pub fn a_lower_width(&self) -> usize {
        self.a
            .iter()
            .filter(|(k, m)| **k < 0 && is_nonzero(m))
            .map(|(k, _)| (-k) as usize)
            .max()
            .unwrap_or(0)
    }

    /// `L_B`: largest `k` with `B(-k)` nonzero.
    pub fn b_lower_width(&self) -> usize {
        self.b
            .iter()
            .filter(|(k, m)| **k < 0 && is_nonzero(m))
            .map(|(k, _)| (-k) as usize)
            .max()
            .unwrap_or(0)
    }

    /// `max(L_A, L_B)`: rows above this level are exact shifts of each other.
    pub fn boundary_depth(&self) -> usize {
        self.a_lower_width().max(self.b_lower_width())
    }

    /// Block row `k` of the assembled chain.
    pub fn block_row(&self, k: usize) -> BlockRow {
        let mut row = BlockRow::new();
        if k == 0 {
            for (&l, m) in self.b.range(0..) {
                add_into(&mut row, l as usize, m);
            }
            return row;
        }
        if let Some(m) = self.b.get(&-(k as i64)) {
            add_into(&mut row, 0, m);
        }
        for (&off, m) in &self.a {
            let col = k as i64 + off;
            if col >= 1 {
                add_into(&mut row, col as usize, m);
            }
        }
        row
    }

    /// Generator of rows `k >= 1`.
    pub fn toeplitz_tail(&self) -> Result<ToeplitzTail> {
        let down = self
            .b
            .range(..0)
            .map(|(&k, m)| ((-k) as usize, m.clone()))
            .collect();
        ToeplitzTail::new(self.d, self.a.clone(), down)
    }

    /// Reflected walk driven by the `A`-sequence: every jump below level 0
    /// lands on 0, so `B(-k) = sum_{l <= -k} A(l)`, `B(0) = sum_{l <= 0} A(l)`
    /// and `B(l) = A(l)` for `l >= 1`.
    pub fn reflected(d: usize, a: BTreeMap<i64, Block>) -> Result<Self> {
        let mut b: BTreeMap<i64, Block> = BTreeMap::new();
        let low = a.keys().next().copied().unwrap_or(0).min(0);
        for k in low..=0 {
            let folded = a
                .range(..=k)
                .fold(Block::zeros(d, d), |acc, (_, m)| acc + m);
            if is_nonzero(&folded) || k == 0 {
                b.insert(k, folded);
            }
        }
        for (&l, m) in a.range(1..) {
            b.insert(l, m.clone());
        }
        Self::new(d, a, b)
    }

    /// M/G/1 boundary: `B(-1) = A(-1)` and `B(k) = A(k - 1)` for `k >= 0`.
    /// Requires `A(k) = 0` for `k <= -2`.
    pub fn mg1(d: usize, a: BTreeMap<i64, Block>) -> Result<Self> {
        let mut b = BTreeMap::new();
        for (&k, m) in &a {
            if k == -1 {
                b.insert(-1, m.clone());
            }
            b.insert(k + 1, m.clone());
        }
        Self::new(d, a, b)
    }
}

fn is_irreducible(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let mut g = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for r in 0..n {
        for c in 0..n {
            if r != c && m[(r, c)] > 0.0 {
                g.add_edge(nodes[r], nodes[c], ());
            }
        }
    }
    tarjan_scc(&g).len() == 1
}

/// `A(z) = sum_k z^k A(k)`.
pub fn a_hat(model: &GIG1Model, z: f64) -> Block {
    model
        .a
        .iter()
        .fold(Block::zeros(model.d, model.d), |acc, (&k, m)| {
            acc + m * z.powi(k as i32)
        })
}

/// `dA/dz = sum_k k z^(k-1) A(k)`.
fn a_hat_derivative(model: &GIG1Model, z: f64) -> Block {
    model
        .a
        .iter()
        .fold(Block::zeros(model.d, model.d), |acc, (&k, m)| {
            acc + m * (k as f64 * z.powi(k as i32 - 1))
        })
}

/// Perron root with left and right eigenvectors, scaled so that
/// `min_i v_i = 1` and `mu . v = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub z: f64,
    pub delta: f64,
    pub mu: Vec<f64>,
    pub v: Vec<f64>,
}

/// Perron triple `(delta, mu, v)` of a non-negative irreducible matrix.
pub fn perron(m: &DMatrix<f64>) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let d = m.nrows();
    if d == 0 || m.ncols() != d {
        return Err(Error::Dimension("Perron root needs a square matrix".into()));
    }
    if m.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidArgument("matrix has a negative entry".into()));
    }
    if !is_irreducible(m) {
        return Err(Error::Reducible);
    }
    if d == 1 {
        return Ok((m[(0, 0)], vec![1.0], vec![1.0]));
    }
    let (right, left) = if d <= DENSE_EIGEN_LIMIT {
        let root = m
            .complex_eigenvalues()
            .iter()
            .map(|c| c.re)
            .fold(f64::NEG_INFINITY, f64::max);
        (null_vector(m, root), null_vector(&m.transpose(), root))
    } else {
        (power_vector(m), power_vector(&m.transpose()))
    };
    let mut v = positive(right)?;
    let mut mu = positive(left)?;
    let vmin = v.min();
    v /= vmin;
    let mv = m * &v;
    let delta = mu.dot(&mv) / mu.dot(&v);
    mu /= mu.dot(&v);

    let scale = m.abs().max().max(delta.abs()) * v.max();
    let residual = (&mv - &v * delta).abs().max();
    if residual > 1e-10 * scale {
        return Err(Error::Eigen(format!(
            "Perron residual {residual:e} is too large"
        )));
    }
    Ok((delta, mu.iter().copied().collect(), v.iter().copied().collect()))
}

fn null_vector(m: &DMatrix<f64>, root: f64) -> DVector<f64> {
    let d = m.nrows();
    let shifted = m - DMatrix::identity(d, d) * root;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let idx = svd.singular_values.imin();
    v_t.row(idx).transpose()
}

fn power_vector(m: &DMatrix<f64>) -> DVector<f64> {
    let d = m.nrows();
    // The identity shift removes periodicity.
    let shifted = m + DMatrix::identity(d, d);
    let mut x = DVector::from_element(d, 1.0 / d as f64);
    for _ in 0..100_000 {
        let mut y = &shifted * &x;
        y /= y.sum();
        let change = (&y - &x).abs().max();
        x = y;
        if change < 1e-16 {
            break;
        }
    }
    x
}

fn positive(x: DVector<f64>) -> Result<DVector<f64>> {
    let sign = if x.sum() < 0.0 { -1.0 } else { 1.0 };
    let x = x * sign;
    let max = x.max();
    if x.iter().any(|&e| e < -1e-8 * max) || !(max > 0.0) {
        return Err(Error::Eigen("Perron vector has mixed signs".into()));
    }
    let x = x.map(|e| e.abs());
    if x.iter().any(|&e| e == 0.0) {
        return Err(Error::Eigen("Perron vector has a zero entry".into()));
    }
    Ok(x)
}

/// Spectral data of `A(z)`.
pub fn spectral_point(model: &GIG1Model, z: f64) -> Result<SpectralPoint> {
    let (delta, mu, v) = perron(&a_hat(model, z))?;
    Ok(SpectralPoint { z, delta, mu, v })
}

/// Stationary vector of `A` dotted with `sum_k k A(k) e`; equals
/// `d delta_A / dz` at `z = 1`.
pub fn mean_drift(model: &GIG1Model) -> Result<f64> {
    let varpi = gth_solve(&model.a_sum())?;
    let d = model.d;
    let mut drift = 0.0;
    for (&k, m) in &model.a {
        for i in 0..d {
            drift += varpi[i] * k as f64 * m.row(i).sum();
        }
    }
    Ok(drift)
}

/// Search settings for the minimiser of `delta_A` on `(1, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaOptions {
    /// Number of log-spaced grid points.
    pub grid: usize,
    /// Bracket width at which golden-section refinement stops.
    pub refine_tol: f64,
    pub z_max: f64,
}

impl Default for AlphaOptions {
    fn default() -> Self {
        Self {
            grid: 200,
            refine_tol: 1e-10,
            z_max: 10.0,
        }
    }
}

fn delta_at(model: &GIG1Model, z: f64) -> Result<f64> {
    Ok(perron(&a_hat(model, z))?.0)
}

/// `d delta_A / dz = mu A'(z) v` with `mu . v = 1`.
fn delta_slope(model: &GIG1Model, z: f64) -> Result<f64> {
    let (_, mu, v) = perron(&a_hat(model, z))?;
    let dv = a_hat_derivative(model, z) * DVector::from_vec(v);
    Ok(mu.iter().zip(dv.iter()).map(|(a, b)| a * b).sum())
}

/// `alpha` minimising `delta_A` over `(1, z_max]`: a log-spaced scan, a
/// golden-section pass on the bracketing cell, and bisection on the sign of
/// the derivative to finish.
pub fn find_alpha(model: &GIG1Model, opts: &AlphaOptions) -> Result<SpectralPoint> {
    if opts.grid < 2 || !(opts.z_max > 1.0) || !(opts.refine_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("bad search options {opts:?}")));
    }
    let drift = mean_drift(model)?;
    if drift >= 0.0 {
        return Err(Error::NonNegativeDrift(drift));
    }
    let ln_max = opts.z_max.ln();
    let zs: Vec<f64> = (0..=opts.grid)
        .map(|j| (ln_max * j as f64 / opts.grid as f64).exp())
        .collect();
    let deltas = zs[1..]
        .par_iter()
        .map(|&z| delta_at(model, z))
        .collect::<Result<Vec<_>>>()?;
    let (best, _) = deltas
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (j, &x)| if x < acc.1 { (j, x) } else { acc });
    let j = best + 1;
    let (mut lo, mut hi) = (zs[j - 1], zs[(j + 1).min(opts.grid)]);

    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = delta_at(model, x1)?;
    let mut f2 = delta_at(model, x2)?;
    while hi - lo > opts.refine_tol * hi {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = delta_at(model, x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = delta_at(model, x2)?;
        }
    }
    let mut alpha = if f1 <= f2 { x1 } else { x2 };

    // The minimum is flat, so the value alone pins alpha only to about
    // sqrt(eps); the derivative changes sign cleanly.
    let (mut a, mut b) = (zs[j - 1], zs[(j + 1).min(opts.grid)]);
    if delta_slope(model, a)? < 0.0 && delta_slope(model, b)? > 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if delta_slope(model, mid)? < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let polished = 0.5 * (a + b);
        if delta_at(model, polished)? <= delta_at(model, alpha)? + 1e-15 {
            alpha = polished;
        }
    }
    let point = spectral_point(model, alpha)?;
    if !(point.delta < 1.0) {
        return Err(Error::NoContraction {
            z: alpha,
            best: point.delta,
        });
    }
    Ok(point)
}

/// `(P v')(k)` for `v'(k) = alpha^k v_A(alpha)`: `w(0) = sum_l alpha^l B(l) v`
/// and `w(k) = B(-k) v + alpha^k sum_{l >= 1 - k} alpha^l A(l) v`.
pub fn w_vector(model: &GIG1Model, alpha: f64, spectral: &SpectralPoint, k: usize) -> Vec<f64> {
    let d = model.d;
    let v = DVector::from_column_slice(&spectral.v);
    let mut acc = DMatrix::zeros(d, d);
    if k == 0 {
        for (&l, m) in model.b.range(0..) {
            acc += m * alpha.powi(l as i32);
        }
    } else {
        if let Some(m) = model.b.get(&-(k as i64)) {
            acc += m;
        }
        let ak = alpha.powi(k as i32);
        for (&l, m) in model.a.range(1 - k as i64..) {
            acc += m * (ak * alpha.powi(l as i32));
        }
    }
    (acc * v).iter().copied().collect()
}

/// Ingredients of a GI/G/1 drift certificate before lifting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GIG1DriftData {
    pub alpha: f64,
    pub spectral: SpectralPoint,
    pub k_star: usize,
    pub gamma_prime: f64,
    pub b_prime: f64,
    #[serde(rename = "K")]
    pub boundary_level: usize,
    /// `w(0), ..., w(K)`.
    pub w: Vec<Vec<f64>>,
}

fn require_block_monotone(model: &GIG1Model) -> Result<()> {
    if is_block_monotone(&assemble(model, model.boundary_depth() + 1)?, model.tol) {
        Ok(())
    } else {
        Err(Error::NotBlockMonotone)
    }
}

/// Certificate with boundary set `{0}` for a block-monotone GI/G/1-type
/// chain: `gamma' = delta_A(alpha)`, `b'` the largest excess of `w` over
/// `gamma' v'` on levels `0..=K`, then lifted through `B(-K)`.
pub fn build_certificate_gig1(
    model: &GIG1Model,
    opts: &AlphaOptions,
) -> Result<(GIG1DriftData, DriftCertificate)> {
    require_block_monotone(model)?;
    let spectral = find_alpha(model, opts)?;
    let alpha = spectral.z;
    let gamma_prime = spectral.delta;
    let k_star = model.boundary_depth() + 1;
    let d = model.d;

    let exits = |k: usize| -> f64 {
        let m = model.b_block(-(k as i64));
        (0..d).map(|i| m.row(i).sum()).fold(f64::INFINITY, f64::min)
    };
    let start = k_star - 1;
    let boundary_level = (start..=start.max(model.b_lower_width()))
        .find(|&k| k == 0 || exits(k) > 0.0)
        .ok_or_else(|| {
            Error::NoAdmissibleLevel(format!(
                "every B(-k) with k >= {start} has a phase with no jump to level 0"
            ))
        })?;

    let w: Vec<Vec<f64>> = (0..=boundary_level)
        .map(|k| w_vector(model, alpha, &spectral, k))
        .collect();
    let b_prime = w
        .iter()
        .enumerate()
        .flat_map(|(k, wk)| {
            let ak = alpha.powi(k as i32);
            wk.iter()
                .zip(&spectral.v)
                .map(move |(x, vi)| x - gamma_prime * ak * vi)
        })
        .fold(B_PRIME_FLOOR, f64::max);

    let vprime = LyapunovVector::geometric(alpha, spectral.v.clone());
    let cert = if boundary_level == 0 {
        DriftCertificate::new(vprime, gamma_prime, b_prime, 0)?
    } else {
        lift_certificate(
            vprime,
            gamma_prime,
            b_prime,
            boundary_level,
            &model.b_block(-(boundary_level as i64)),
        )?
    };
    let check = verify_tail_drift(model, &cert, DEFAULT_VERIFY_TOLERANCE)?;
    if !check.is_valid() {
        return Err(Error::Certificate(format!(
            "constructed certificate fails its own check: {:?}",
            check.violations
        )));
    }
    let data = GIG1DriftData {
        alpha,
        spectral,
        k_star,
        gamma_prime,
        b_prime,
        boundary_level,
        w,
    };
    Ok((data, cert))
}

/// Blocks that break the M/G/1 boundary pattern.
pub fn mg1_mismatches(model: &GIG1Model) -> Vec<String> {
    let tol = model.tol;
    let differs = |x: &Block, y: &Block| (x - y).abs().max() > tol;
    let mut out = Vec::new();
    for (&k, m) in model.a.range(..-1) {
        if is_nonzero(m) {
            out.push(format!("A({k}) must vanish"));
        }
    }
    for (&k, m) in model.b.range(..-1) {
        if is_nonzero(m) {
            out.push(format!("B({k}) must vanish"));
        }
    }
    if differs(&model.b_block(-1), &model.a_block(-1)) {
        out.push("B(-1) differs from A(-1)".into());
    }
    let top = model
        .a
        .keys()
        .next_back()
        .map(|k| k + 1)
        .into_iter()
        .chain(model.b.keys().next_back().copied())
        .max()
        .unwrap_or(0);
    for k in 0..=top {
        if differs(&model.b_block(k), &model.a_block(k - 1)) {
            out.push(format!("B({k}) differs from A({})", k - 1));
        }
    }
    out
}

/// Certificate for the M/G/1 boundary: `gamma = delta_A(alpha)`,
/// `b = (alpha - 1) max_i v_A(alpha, i)`, `v(k) = alpha^k v_A(alpha)`.
pub fn mg1_certificate(model: &GIG1Model, opts: &AlphaOptions) -> Result<DriftCertificate> {
    let bad = mg1_mismatches(model);
    if !bad.is_empty() {
        return Err(Error::PatternMismatch(bad));
    }
    require_block_monotone(model)?;
    let spectral = find_alpha(model, opts)?;
    let vmax = spectral.v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let b = (spectral.z - 1.0) * vmax;
    DriftCertificate::new(
        LyapunovVector::geometric(spectral.z, spectral.v),
        spectral.delta,
        b,
        0,
    )
}

/// Explicit rows `0..levels` of `P` with the GI/G/1 tail attached.
pub fn assemble(model: &GIG1Model, levels: usize) -> Result<BlockStochasticMatrix> {
    let need = model.boundary_depth() + 1;
    if levels < need {
        return Err(Error::InvalidArgument(format!(
            "{levels} levels cannot hold the boundary blocks; need at least {need}"
        )));
    }
    let rows = (0..levels).map(|k| model.block_row(k)).collect();
    BlockStochasticMatrix::with_parts(model.d, rows, Some(model.toeplitz_tail()?), model.tol)
}

/// Checks a certificate against the chain: every row up to the point where
/// rows become shifts of each other explicitly, the rest in closed form.
pub fn verify_tail_drift(
    model: &GIG1Model,
    cert: &DriftCertificate,
    tol: f64,
) -> Result<DriftCheck> {
    verify_certificate(&assemble(model, model.boundary_depth() + 1)?, cert, tol)
}
