//! Pathwise couplings of block-monotone chains by inverse-transform sampling.
//!
//! Both chains read the same uniforms: `S` drives the shared phase process
//! through `G^-1(s | i)`, and `U` drives each chain's level through the
//! conditional inverse `F^-1(u | k, i, j)`. Ordered inputs then give ordered
//! levels at every step.

use std::io::Write;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block_matrix::{
    block_dominates, is_block_monotone, phase_matrix, BlockStochasticMatrix, PhaseMatrix,
};
use crate::error::{Error, Result};

/// Seed and path index. Path `p` owns ChaCha streams `2p` (levels) and
/// `2p + 1` (phases), so every path is reproducible on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub seed: u64,
    pub path: u64,
}

impl StreamId {
    pub fn new(seed: u64, path: u64) -> Self {
        Self { seed, path }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn level_rng(&self) -> ChaCha8Rng {
        self.rng(2 * self.path)
    }

    fn phase_rng(&self) -> ChaCha8Rng {
        self.rng(2 * self.path + 1)
    }
}

/// `G^-1(s | i)`: smallest `j` with `sum_{j' <= j} psi(i, j') >= s`.
pub fn phase_step(psi: &PhaseMatrix, i: usize, s: f64) -> usize {
    let d = psi.d();
    let mut acc = 0.0;
    let mut last = 0;
    for j in 0..d {
        let x = psi.get(i, j);
        if x > 0.0 {
            acc += x;
            last = j;
            if acc >= s {
                return j;
            }
        }
    }
    // Rounding left the cumulative sum just below s.
    last
}

/// `F^-1(u | k, i, j)`: smallest level `l` whose conditional CDF
/// `sum_{m <= l} p(k, i; m, j) / psi(i, j)` reaches `u`, with `psi(i, j)`
/// taken from row `k` itself.
pub fn level_step(p: &BlockStochasticMatrix, k: usize, i: usize, j: usize, u: f64) -> Result<usize> {
    let row = p.row(k).ok_or(Error::LevelOutOfRange {
        requested: k,
        max: p.levels() - 1,
    })?;
    let psi: f64 = row.values().map(|m| m[(i, j)]).sum();
    if !(psi > 0.0) {
        return Err(Error::ZeroPhaseProbability { i, j });
    }
    let target = u * psi;
    let mut acc = 0.0;
    let mut last = k;
    for (&l, m) in row.iter() {
        let x = m[(i, j)];
        if x > 0.0 {
            acc += x;
            last = l;
            if acc >= target {
                return Ok(l);
            }
        }
    }
    Ok(last)
}

/// Paired sample path. `low` and `high` hold the levels of the chain that
/// should stay below and above; both share `phases`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTrajectory {
    pub stream: StreamId,
    pub phases: Vec<usize>,
    pub low: Vec<usize>,
    pub high: Vec<usize>,
    /// Some path touched the top stored level, where the finite corner stops
    /// representing an unbounded chain.
    pub hit_top: bool,
}

impl CoupledTrajectory {
    /// Number of recorded states, including step 0.
    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn is_ordered(&self) -> bool {
        self.low.iter().zip(&self.high).all(|(a, b)| a <= b)
    }

    /// First step at which both levels agree.
    pub fn first_meeting(&self) -> Option<usize> {
        self.low.iter().zip(&self.high).position(|(a, b)| a == b)
    }

    /// CSV with header `step,phase,level_low,level_high`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,phase,level_low,level_high")?;
        for (step, ((j, lo), hi)) in self
            .phases
            .iter()
            .zip(&self.low)
            .zip(&self.high)
            .enumerate()
        {
            writeln!(out, "{step},{j},{lo},{hi}")?;
        }
        Ok(())
    }
}

/// Draws a phase from the stationary law of `psi` on a stream disjoint from
/// the ones that drive the path.
pub fn random_initial_phase(psi: &PhaseMatrix, stream: StreamId) -> Result<usize> {
    let marginal = psi
        .marginal()
        .ok_or_else(|| Error::InvalidArgument("phase kernel has no unique stationary law".into()))?;
    let mut rng = stream.rng(u64::MAX - stream.path);
    let s: f64 = rng.sample(Open01);
    let mut acc = 0.0;
    for (j, &x) in marginal.iter().enumerate() {
        acc += x;
        if acc >= s {
            return Ok(j);
        }
    }
    Ok(marginal.len() - 1)
}

fn check_start(p: &BlockStochasticMatrix, levels: &[usize], j0: usize) -> Result<()> {
    if !p.is_finite() {
        return Err(Error::InvalidArgument(
            "couplings run on finite corners; truncate first".into(),
        ));
    }
    if j0 >= p.d() {
        return Err(Error::InvalidArgument(format!("phase {j0} >= d = {}", p.d())));
    }
    if let Some(&k) = levels.iter().find(|&&k| k >= p.levels()) {
        return Err(Error::LevelOutOfRange {
            requested: k,
            max: p.levels() - 1,
        });
    }
    if levels[0] > levels[1] {
        return Err(Error::InvalidArgument(format!(
            "initial levels are not ordered: {} > {}",
            levels[0], levels[1]
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    lower: &BlockStochasticMatrix,
    upper: &BlockStochasticMatrix,
    psi: &PhaseMatrix,
    x0_low: usize,
    x0_high: usize,
    j0: usize,
    steps: usize,
    stream: StreamId,
) -> Result<CoupledTrajectory> {
    let mut u_rng = stream.level_rng();
    let mut s_rng = stream.phase_rng();
    let top = lower.levels().min(upper.levels()) - 1;
    let mut t = CoupledTrajectory {
        stream,
        phases: Vec::with_capacity(steps + 1),
        low: Vec::with_capacity(steps + 1),
        high: Vec::with_capacity(steps + 1),
        hit_top: x0_high >= top,
    };
    let (mut j, mut lo, mut hi) = (j0, x0_low, x0_high);
    t.phases.push(j);
    t.low.push(lo);
    t.high.push(hi);
    for step in 1..=steps {
        let s: f64 = s_rng.sample(Open01);
        let u: f64 = u_rng.sample(Open01);
        let next = phase_step(psi, j, s);
        lo = level_step(lower, lo, j, next, u)?;
        hi = level_step(upper, hi, j, next, u)?;
        j = next;
        if lo > hi {
            return Err(Error::OrderingViolated {
                step,
                low: lo,
                high: hi,
            });
        }
        t.hit_top |= hi >= top;
        t.phases.push(j);
        t.low.push(lo);
        t.high.push(hi);
    }
    Ok(t)
}

/// Two copies of a block-monotone `P` started at `x0_low <= x0_high` in the
/// same phase. Fails if the levels ever cross.
pub fn run_coupled_monotone(
    p: &BlockStochasticMatrix,
    x0_low: usize,
    x0_high: usize,
    j0: usize,
    steps: usize,
    stream: StreamId,
) -> Result<CoupledTrajectory> {
    check_start(p, &[x0_low, x0_high], j0)?;
    if !is_block_monotone(p, p.row_tolerance()) {
        return Err(Error::NotBlockMonotone);
    }
    let psi = phase_matrix(p, p.row_tolerance())?;
    simulate(p, p, &psi, x0_low, x0_high, j0, steps, stream)
}

/// `P` started at `x0` below `P~` started at `x0_tilde`, where `P` is
/// block-wise dominated by `P~`, one of them is block-monotone and both
/// share the phase kernel.
pub fn run_coupled_dominance(
    p: &BlockStochasticMatrix,
    ptilde: &BlockStochasticMatrix,
    x0: usize,
    x0_tilde: usize,
    j0: usize,
    steps: usize,
    stream: StreamId,
) -> Result<CoupledTrajectory> {
    check_start(p, &[x0, x0_tilde], j0)?;
    check_start(ptilde, &[x0, x0_tilde], j0)?;
    let tol = p.row_tolerance().max(ptilde.row_tolerance());
    if !block_dominates(p, ptilde, tol)? {
        return Err(Error::NotDominated);
    }
    if !is_block_monotone(p, tol) && !is_block_monotone(ptilde, tol) {
        return Err(Error::NotBlockMonotone);
    }
    let psi = phase_matrix(p, tol)?;
    let psi_tilde = phase_matrix(ptilde, tol)?;
    let gap = (psi.psi() - psi_tilde.psi()).abs().max();
    if gap > tol {
        return Err(Error::InvalidArgument(format!(
            "phase kernels differ by {gap}"
        )));
    }
    simulate(p, ptilde, &psi, x0, x0_tilde, j0, steps, stream)
}
