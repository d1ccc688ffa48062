//! Per-instance checks of the block-order propositions. Each takes a seed and
//! a shape and reports the first failure as a message, so the same checks can
//! run under proptest and in the acceptance sweep.

use bmtrunc::block_matrix::{
    block_dominates, is_block_increasing, is_block_monotone, lcb_augment, lcb_truncate,
    phase_matrix, stationary, vector_dominates,
};
use bmtrunc::{BlockStochasticMatrix, BlockVector};
use nalgebra::DVector;
use rand::Rng;

use super::*;

pub type Check = std::result::Result<(), String>;

const TOL: f64 = 1e-12;
const SOLVE_TOL: f64 = 1e-10;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Column vector `x` satisfies `T^-1 x >= -tol`.
fn oracle_increasing(x: &BlockVector, tol: f64) -> bool {
    let t_inv = t_inverse(x.d(), x.levels());
    let y = t_inv * DVector::from_column_slice(x.as_slice());
    y.iter().all(|&v| v >= -tol)
}

/// Moves each entry of `mu` up by a random number of levels within its phase.
fn push_up(rng: &mut impl Rng, mu: &BlockVector) -> BlockVector {
    let (d, levels) = (mu.d(), mu.levels());
    let mut out = vec![0.0; d * levels];
    for k in 0..levels {
        for i in 0..d {
            let to = rng.random_range(k..levels);
            out[to * d + i] += mu.get(k, i);
        }
    }
    BlockVector::from_flat(d, out).unwrap()
}

fn candidate(rng: &mut impl Rng, d: usize, levels: usize, kind: u8) -> BlockStochasticMatrix {
    match kind {
        0 => random_monotone(rng, d, levels, false),
        1 => random_monotone(rng, d, levels, true),
        2 => random_stochastic(rng, d, levels, true),
        _ => {
            let p = random_monotone(rng, d, levels, false);
            let q = random_stochastic(rng, d, levels, false);
            let w = rng.random_range(0.0..0.2);
            mix(&p, &q, w)
        }
    }
}

/// The suffix-sum monotonicity check agrees with `T^-1 S T >= 0`, on
/// monotone, unstructured and nearly monotone matrices.
pub fn monotone_check_matches_oracle(seed: u64, d: usize, levels: usize) -> Check {
    let mut rng = rng(seed);
    for kind in 0..4 {
        let s = candidate(&mut rng, d, levels, kind);
        let fast = is_block_monotone(&s, TOL);
        let slow = oracle_monotone(&s, TOL);
        ensure(fast == slow, || {
            format!("kind {kind}: suffix check {fast}, explicit product {slow}")
        })?;
        if kind < 2 {
            ensure(fast, || format!("kind {kind}: generated matrix not monotone"))?;
        }
        let p2 = random_monotone(&mut rng, d, levels, false);
        let fast = block_dominates(&s, &p2, TOL).map_err(|e| e.to_string())?;
        let slow = oracle_dominates(&s, &p2, TOL);
        ensure(fast == slow, || {
            format!("kind {kind}: dominance check {fast}, explicit product {slow}")
        })?;
    }
    Ok(())
}

/// A monotone `S` preserves the vector order and maps block-increasing
/// vectors to block-increasing vectors.
pub fn monotone_preserves_order(seed: u64, d: usize, levels: usize) -> Check {
    let mut rng = rng(seed);
    let sparse = rng.random_bool(0.5);
    let s = random_monotone(&mut rng, d, levels, sparse);
    for _ in 0..4 {
        let mu = random_distribution(&mut rng, d, levels, true);
        let eta = push_up(&mut rng, &mu);
        ensure(oracle_vector_dominates(&mu, &eta, TOL), || "push_up broke the order".into())?;
        ensure(vector_dominates(&mu, &eta, TOL).unwrap(), || {
            "vector_dominates rejects an ordered pair".into()
        })?;
        let (ms, es) = (s.left_mul(&mu).unwrap(), s.left_mul(&eta).unwrap());
        ensure(oracle_vector_dominates(&ms, &es, TOL), || {
            "mu S not dominated by eta S (explicit product)".into()
        })?;
        ensure(vector_dominates(&ms, &es, TOL).unwrap(), || {
            "mu S not dominated by eta S".into()
        })?;

        let f = random_block_increasing(&mut rng, d, levels);
        ensure(is_block_increasing(&f), || "generated f not increasing".into())?;
        let sf = right_mul(&s, &f);
        ensure(oracle_increasing(&sf, 1e-12), || "S f is not block-increasing".into())?;
    }
    Ok(())
}

/// For `P1` below `P2` with one of them monotone: equal phase kernels, the
/// order survives powers 2..=5 and the stationary vectors are ordered.
pub fn dominance_consequences(seed: u64, d: usize, levels: usize) -> Check {
    let mut rng = rng(seed);
    let base = random_monotone(&mut rng, d, levels, false);
    let upper_is_base = rng.random_bool(0.5);
    let other = random_reshaped(&mut rng, &base, !upper_is_base, false);
    let (p1, p2) = if upper_is_base {
        (other, base)
    } else {
        (base, other)
    };
    ensure(oracle_dominates(&p1, &p2, TOL), || "pair is not ordered".into())?;
    ensure(block_dominates(&p1, &p2, TOL).unwrap(), || "block_dominates rejects pair".into())?;

    let psi1 = phase_matrix(&p1, 1e-12).map_err(|e| e.to_string())?;
    let psi2 = phase_matrix(&p2, 1e-12).map_err(|e| e.to_string())?;
    let gap = (psi1.psi() - psi2.psi()).abs().max();
    ensure(gap < 1e-12, || format!("phase kernels differ by {gap}"))?;

    let (mut a, mut b) = (p1.clone(), p2.clone());
    for m in 2..=5 {
        a = mat_mul(&a, &p1);
        b = mat_mul(&b, &p2);
        ensure(oracle_dominates(&a, &b, 1e-10), || format!("P1^{m} not below P2^{m}"))?;
        ensure(block_dominates(&a, &b, 1e-10).unwrap(), || {
            format!("block_dominates rejects P1^{m}, P2^{m}")
        })?;
    }

    let pi1 = stationary(&p1).map_err(|e| e.to_string())?;
    let pi2 = stationary(&p2).map_err(|e| e.to_string())?;
    ensure(oracle_vector_dominates(&pi1, &pi2, SOLVE_TOL), || {
        "pi1 not below pi2 (explicit product)".into()
    })?;
    ensure(vector_dominates(&pi1, &pi2, SOLVE_TOL).unwrap(), || "pi1 not below pi2".into())
}

/// Truncations of a monotone matrix are monotone, increase with `n` and stay
/// below the matrix itself.
pub fn truncation_order(seed: u64, d: usize, levels: usize) -> Check {
    let mut rng = rng(seed);
    let sparse = rng.random_bool(0.5);
    let p = random_monotone(&mut rng, d, levels, sparse);
    for n in 1..levels {
        let t = lcb_truncate(&p, n).unwrap();
        ensure(is_block_monotone(&t, TOL) && oracle_monotone(&t, TOL), || {
            format!("truncation at {n} is not monotone")
        })?;
        let full = lcb_augment(&p, n).unwrap();
        ensure(block_dominates(&full, &p, TOL).unwrap() && oracle_dominates(&full, &p, TOL), || {
            format!("truncation at {n} is not below P")
        })?;
        if n + 1 < levels {
            let next = lcb_augment(&p, n + 1).unwrap();
            ensure(
                block_dominates(&full, &next, TOL).unwrap() && oracle_dominates(&full, &next, TOL),
                || format!("truncation at {n} is not below truncation at {}", n + 1),
            )?;
        }
    }
    Ok(())
}

/// Phase marginals of every truncation's stationary vector equal the
/// stationary law of the phase kernel.
pub fn marginal_invariance(p: &BlockStochasticMatrix, ns: &[usize], tol: f64) -> Check {
    let psi = phase_matrix(p, 1e-9).map_err(|e| e.to_string())?;
    let varpi = psi
        .marginal()
        .ok_or_else(|| "phase kernel has no unique stationary law".to_string())?
        .to_vec();
    for &n in ns {
        let pi = stationary(&lcb_truncate(p, n).unwrap()).map_err(|e| e.to_string())?;
        let marg = pi.phase_marginal();
        let err = marg
            .iter()
            .zip(&varpi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(err <= tol, || format!("n = {n}: marginal off by {err:e}"))?;
    }
    Ok(())
}

/// Random monotone finite instance for the marginal check.
pub fn marginal_invariance_random(seed: u64, d: usize, levels: usize) -> Check {
    let mut rng = rng(seed);
    let p = random_monotone(&mut rng, d, levels, false);
    let ns: Vec<usize> = (1..levels).collect();
    marginal_invariance(&p, &ns, 1e-9)
}
