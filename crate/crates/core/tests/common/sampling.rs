//! Coupling runs shared by the coupling suite and the acceptance sweep.

use bmtrunc::coupling::{
    random_initial_phase, run_coupled_dominance, run_coupled_monotone, CoupledTrajectory, StreamId,
};
use bmtrunc::block_matrix::phase_matrix;
use bmtrunc::BlockStochasticMatrix;
use rayon::prelude::*;

use super::props::Check;

/// Which coupling drives the two copies.
#[derive(Clone, Copy)]
pub enum Pairing<'a> {
    /// Two copies of one monotone matrix.
    Monotone(&'a BlockStochasticMatrix),
    /// A matrix below its dominating partner.
    Dominance(&'a BlockStochasticMatrix, &'a BlockStochasticMatrix),
}

impl Pairing<'_> {
    fn lower(&self) -> &BlockStochasticMatrix {
        match self {
            Pairing::Monotone(p) | Pairing::Dominance(p, _) => p,
        }
    }

    fn upper(&self) -> &BlockStochasticMatrix {
        match self {
            Pairing::Monotone(p) | Pairing::Dominance(_, p) => p,
        }
    }

    pub fn run(&self, lo: usize, hi: usize, j0: usize, steps: usize, stream: StreamId) -> bmtrunc::Result<CoupledTrajectory> {
        match *self {
            Pairing::Monotone(p) => run_coupled_monotone(p, lo, hi, j0, steps, stream),
            Pairing::Dominance(p, q) => run_coupled_dominance(p, q, lo, hi, j0, steps, stream),
        }
    }
}

/// `paths` trajectories of `steps` steps from spread-out starting points;
/// any crossing or error is reported.
pub fn check_ordering(pair: Pairing, paths: u64, steps: usize, seed: u64) -> Check {
    let levels = pair.lower().levels().min(pair.upper().levels());
    let d = pair.lower().d();
    (0..paths).into_par_iter().try_for_each(|path| {
        let j0 = path as usize % d;
        let hi = (path as usize * 7 + levels / 2) % levels;
        let lo = (path as usize * 3) % (hi + 1);
        let t = pair
            .run(lo, hi, j0, steps, StreamId::new(seed, path))
            .map_err(|e| format!("path {path}: {e}"))?;
        if t.len() != steps + 1 || !t.is_ordered() {
            return Err(format!("path {path}: trajectory malformed or unordered"));
        }
        Ok(())
    })
}

/// Histograms of the `(level, phase)` reached in one step by each copy,
/// indexed `level * d + phase`.
pub fn one_step_counts(
    pair: Pairing,
    lo: usize,
    hi: usize,
    i: usize,
    samples: u64,
    seed: u64,
) -> (Vec<u64>, Vec<u64>) {
    let d = pair.lower().d();
    let states = pair.lower().num_states().max(pair.upper().num_states());
    (0..samples)
        .into_par_iter()
        .fold(
            || (vec![0u64; states], vec![0u64; states]),
            |(mut a, mut b), path| {
                let t = pair.run(lo, hi, i, 1, StreamId::new(seed, path)).unwrap();
                a[t.low[1] * d + t.phases[1]] += 1;
                b[t.high[1] * d + t.phases[1]] += 1;
                (a, b)
            },
        )
        .reduce(
            || (vec![0; states], vec![0; states]),
            |(mut a, mut b), (c, e)| {
                a.iter_mut().zip(&c).for_each(|(x, y)| *x += y);
                b.iter_mut().zip(&e).for_each(|(x, y)| *x += y);
                (a, b)
            },
        )
}

/// Every empirical frequency lies within three binomial standard deviations
/// of the probability it estimates.
pub fn within_3_sigma(counts: &[u64], probs: &[f64], label: &str) -> Check {
    let n = counts.iter().sum::<u64>() as f64;
    for (s, (&c, &p)) in counts.iter().zip(probs).enumerate() {
        let freq = c as f64 / n;
        let sigma = (p * (1.0 - p) / n).sqrt();
        if (freq - p).abs() > 3.0 * sigma + 1e-12 {
            return Err(format!("{label}, cell {s}: frequency {freq} vs probability {p}"));
        }
    }
    Ok(())
}

/// Row `(k, i)` of `p` as a flat `level * d + phase` vector.
pub fn row_probs(p: &BlockStochasticMatrix, k: usize, i: usize) -> Vec<f64> {
    let d = p.d();
    (0..p.num_states()).map(|s| p.entry(k, i, s / d, s % d)).collect()
}

/// One-step marginals of both copies started from `(lo, i)` and `(hi, i)`.
pub fn check_marginals(pair: Pairing, lo: usize, hi: usize, i: usize, samples: u64, seed: u64) -> Check {
    let (a, b) = one_step_counts(pair, lo, hi, i, samples, seed);
    within_3_sigma(&a, &row_probs(pair.lower(), lo, i), "lower copy")?;
    within_3_sigma(&b, &row_probs(pair.upper(), hi, i), "upper copy")
}

/// Phase after `steps` steps from a stationary initial phase, tallied over
/// independent paths and compared with the stationary phase law.
pub fn check_phase_law(p: &BlockStochasticMatrix, steps: usize, samples: u64, seed: u64) -> Check {
    let psi = phase_matrix(p, 1e-9).map_err(|e| e.to_string())?;
    let varpi = psi.marginal().ok_or("no unique phase law")?.to_vec();
    let d = p.d();
    let top = p.levels() - 1;
    let counts = (0..samples)
        .into_par_iter()
        .fold(
            || vec![0u64; d],
            |mut c, path| {
                let stream = StreamId::new(seed, path);
                let j0 = random_initial_phase(&psi, stream).unwrap();
                let t = run_coupled_monotone(p, 0, top, j0, steps, stream).unwrap();
                c[*t.phases.last().unwrap()] += 1;
                c
            },
        )
        .reduce(|| vec![0; d], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    within_3_sigma(&counts, &varpi, "phase law")
}
