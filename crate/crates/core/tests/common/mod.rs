//! Shared fixtures for the integration tests: random block-monotone
//! instances, the explicit summation-matrix oracle and the named test models.

#![allow(dead_code)]

pub mod props;
pub mod sampling;

use std::collections::BTreeMap;

use bmtrunc::block_matrix::{Block, BlockRow};
use bmtrunc::gig1::GIG1Model;
use bmtrunc::{BlockStochasticMatrix, BlockVector};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability vector of length `n`. With `sparse`, roughly a third
/// of the entries are zero (never all of them).
pub fn random_probability(rng: &mut impl Rng, n: usize, sparse: bool) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            if sparse && rng.random_bool(0.35) {
                0.0
            } else {
                rng.random_range(0.05..1.0)
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        let idx = rng.random_range(0..n);
        w[idx] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Tail function `t(l) = sum_{m >= l} r(m)` for `l` in `0..=n`, so `t(0) = 1`
/// and `t(n) = 0`.
fn tail_of(r: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; r.len() + 1];
    for l in (0..r.len()).rev() {
        t[l] = t[l + 1] + r[l];
    }
    t[0] = 1.0;
    t
}

/// Suffix sums laid out `[k][i][j][l]`, each scaled by `psi(i, j)`.
type Tails = Vec<Vec<Vec<Vec<f64>>>>;

fn matrix_from_tails(d: usize, tails: &Tails) -> BlockStochasticMatrix {
    let levels = tails.len();
    let rows: Vec<BlockRow> = tails
        .iter()
        .map(|tk| {
            let mut row = BlockRow::new();
            for l in 0..levels {
                let m = Block::from_fn(d, d, |i, j| (tk[i][j][l] - tk[i][j][l + 1]).max(0.0));
                if m.iter().any(|&x| x > 0.0) {
                    row.insert(l, m);
                }
            }
            row
        })
        .collect();
    BlockStochasticMatrix::new(d, rows).expect("generated matrix is stochastic")
}

fn suffix_table(p: &BlockStochasticMatrix) -> Tails {
    let (d, levels) = (p.d(), p.levels());
    (0..levels)
        .map(|k| {
            (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| {
                            let mut t = vec![0.0; levels + 1];
                            for l in (0..levels).rev() {
                                t[l] = t[l + 1] + p.entry(k, i, l, j);
                            }
                            t
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn random_phase_kernel(rng: &mut impl Rng, d: usize, sparse: bool) -> DMatrix<f64> {
    let mut psi = DMatrix::zeros(d, d);
    for i in 0..d {
        let row = random_probability(rng, d, sparse);
        for j in 0..d {
            psi[(i, j)] = row[j];
        }
    }
    psi
}

/// Block-monotone stochastic matrix. Each phase pair gets a stochastically
/// increasing family of level laws: the tail of row `k` is the pointwise
/// maximum of the tail of row `k - 1` and a fresh random tail.
pub fn random_monotone(rng: &mut impl Rng, d: usize, levels: usize, sparse: bool) -> BlockStochasticMatrix {
    let psi = random_phase_kernel(rng, d, sparse);
    let mut tails: Tails = vec![vec![vec![Vec::new(); d]; d]; levels];
    for i in 0..d {
        for j in 0..d {
            let mut prev = vec![0.0f64; levels + 1];
            for k in 0..levels {
                let fresh = tail_of(&random_probability(rng, levels, sparse));
                let t: Vec<f64> = prev.iter().zip(&fresh).map(|(a, b)| a.max(*b)).collect();
                tails[k][i][j] = t.iter().map(|x| x * psi[(i, j)]).collect();
                prev = t;
            }
        }
    }
    matrix_from_tails(d, &tails)
}

/// Matrix with the phase kernel of `base` whose suffix sums are all below
/// (or, with `above`, all above) those of `base`. Each tail is clipped by a
/// random tail scaled to the same phase mass.
pub fn random_reshaped(
    rng: &mut impl Rng,
    base: &BlockStochasticMatrix,
    above: bool,
    sparse: bool,
) -> BlockStochasticMatrix {
    let (d, levels) = (base.d(), base.levels());
    let mut tails = suffix_table(base);
    for tk in tails.iter_mut() {
        for ti in tk.iter_mut() {
            for t in ti.iter_mut() {
                let psi = t[0];
                let cut = tail_of(&random_probability(rng, levels, sparse));
                for l in 1..levels {
                    t[l] = if above {
                        t[l].max(psi * cut[l])
                    } else {
                        t[l].min(psi * cut[l])
                    };
                }
            }
        }
    }
    matrix_from_tails(d, &tails)
}

/// Unstructured stochastic matrix; monotone only by accident.
pub fn random_stochastic(rng: &mut impl Rng, d: usize, levels: usize, sparse: bool) -> BlockStochasticMatrix {
    let n = d * levels;
    let mut dense = DMatrix::zeros(n, n);
    for r in 0..n {
        let row = random_probability(rng, n, sparse);
        for c in 0..n {
            dense[(r, c)] = row[c];
        }
    }
    BlockStochasticMatrix::from_dense(d, &dense).unwrap()
}

/// Convex mixture `(1 - w) P + w Q` of two matrices with equal shape.
pub fn mix(p: &BlockStochasticMatrix, q: &BlockStochasticMatrix, w: f64) -> BlockStochasticMatrix {
    let dense = p.to_dense().unwrap() * (1.0 - w) + q.to_dense().unwrap() * w;
    BlockStochasticMatrix::from_dense(p.d(), &dense).unwrap()
}

/// Non-negative at level 0, so `T^-1 f >= 0` holds in full.
pub fn random_block_increasing(rng: &mut impl Rng, d: usize, levels: usize) -> BlockVector {
    let mut entries = Vec::with_capacity(levels);
    let mut cur: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
    for _ in 0..levels {
        entries.push(cur.clone());
        for x in cur.iter_mut() {
            *x += if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) };
        }
    }
    BlockVector::new(d, entries).unwrap()
}

pub fn random_distribution(rng: &mut impl Rng, d: usize, levels: usize, sparse: bool) -> BlockVector {
    BlockVector::from_flat(d, random_probability(rng, d * levels, sparse)).unwrap()
}

/// Explicit block summation matrix: identity blocks on and below the block
/// diagonal, so `(x T)(l, j) = sum_{m >= l} x(m, j)`.
pub fn t_matrix(d: usize, levels: usize) -> DMatrix<f64> {
    let n = d * levels;
    DMatrix::from_fn(n, n, |r, c| {
        if r / d >= c / d && r % d == c % d {
            1.0
        } else {
            0.0
        }
    })
}

/// Its inverse: identity blocks on the diagonal, minus identity just below.
pub fn t_inverse(d: usize, levels: usize) -> DMatrix<f64> {
    let n = d * levels;
    DMatrix::from_fn(n, n, |r, c| {
        if r % d != c % d {
            0.0
        } else if r / d == c / d {
            1.0
        } else if r / d == c / d + 1 {
            -1.0
        } else {
            0.0
        }
    })
}

pub fn oracle_monotone(p: &BlockStochasticMatrix, tol: f64) -> bool {
    let (d, levels) = (p.d(), p.levels());
    let s = p.to_dense().unwrap();
    let prod = t_inverse(d, levels) * s * t_matrix(d, levels);
    prod.iter().all(|&x| x >= -tol)
}

pub fn oracle_dominates(p1: &BlockStochasticMatrix, p2: &BlockStochasticMatrix, tol: f64) -> bool {
    let t = t_matrix(p1.d(), p1.levels());
    let a = p1.to_dense().unwrap() * &t;
    let b = p2.to_dense().unwrap() * &t;
    a.iter().zip(b.iter()).all(|(x, y)| *x <= *y + tol)
}

pub fn oracle_vector_dominates(mu: &BlockVector, eta: &BlockVector, tol: f64) -> bool {
    let t = t_matrix(mu.d(), mu.levels());
    let a = DMatrix::from_row_slice(1, mu.as_slice().len(), mu.as_slice()) * &t;
    let b = DMatrix::from_row_slice(1, eta.as_slice().len(), eta.as_slice()) * &t;
    a.iter().zip(b.iter()).all(|(x, y)| *x <= *y + tol)
}

pub fn mat_mul(p: &BlockStochasticMatrix, q: &BlockStochasticMatrix) -> BlockStochasticMatrix {
    let dense = p.to_dense().unwrap() * q.to_dense().unwrap();
    BlockStochasticMatrix::from_dense(p.d(), &dense).unwrap()
}

/// `S f` for a column vector `f`.
pub fn right_mul(p: &BlockStochasticMatrix, f: &BlockVector) -> BlockVector {
    let x = p.to_dense().unwrap() * nalgebra::DVector::from_column_slice(f.as_slice());
    BlockVector::from_flat(p.d(), x.as_slice().to_vec()).unwrap()
}

pub fn blocks(entries: &[(i64, &[f64])], d: usize) -> BTreeMap<i64, Block> {
    entries
        .iter()
        .map(|(k, v)| (*k, DMatrix::from_row_slice(d, d, v)))
        .collect()
}

/// Simple random walk: down 0.6, up 0.4.
pub fn walk_a() -> BTreeMap<i64, Block> {
    blocks(&[(-1, &[0.6]), (1, &[0.4])], 1)
}

/// Birth-death chain reflected at 0.
pub fn birth_death() -> GIG1Model {
    GIG1Model::reflected(1, walk_a()).unwrap()
}

/// The walk with the M/G/1 boundary row.
pub fn walk_mg1() -> GIG1Model {
    GIG1Model::mg1(1, walk_a()).unwrap()
}

pub fn two_phase_a() -> BTreeMap<i64, Block> {
    blocks(
        &[
            (-1, &[0.35, 0.15, 0.25, 0.3]),
            (0, &[0.1, 0.1, 0.05, 0.1]),
            (1, &[0.15, 0.15, 0.1, 0.2]),
        ],
        2,
    )
}

pub fn mg1_two_phase() -> GIG1Model {
    GIG1Model::mg1(2, two_phase_a()).unwrap()
}

/// Two-phase GI/G/1 chain with its own boundary blocks and `B(-1) e > 0`.
pub fn gig1_two_phase() -> GIG1Model {
    let a = two_phase_a();
    let (am, a0, a1) = (a[&-1].clone(), a[&0].clone(), a[&1].clone());
    let b = BTreeMap::from([
        (-1, am.clone()),
        (0, &am + &a0 * 0.5),
        (1, &a0 * 0.5 + &a1 * 0.5),
        (2, &a1 * 0.5),
    ]);
    GIG1Model::new(2, a, b).unwrap()
}

/// Chain below `gig1_two_phase` in the block-wise order: rows 2, 4, 6, 8
/// send a fifth of their one-level-down mass straight to level 0.
pub fn dominated_pair() -> (BlockStochasticMatrix, GIG1Model) {
    let upper = gig1_two_phase();
    let rows: Vec<BlockRow> = (0..=8)
        .map(|k| {
            let mut row = upper.block_row(k);
            if k % 2 == 0 && k > 0 {
                let down = row[&(k - 1)].clone() * 0.2;
                *row.get_mut(&(k - 1)).unwrap() -= &down;
                *row.entry(0).or_insert_with(|| Block::zeros(2, 2)) += down;
            }
            row
        })
        .collect();
    let tail = upper.toeplitz_tail().unwrap();
    let p = BlockStochasticMatrix::with_parts(2, rows, Some(tail), upper.tolerance()).unwrap();
    (p, upper)
}

/// Random stochastic `A`-sequence on offsets `-2..=2`; `up` scales the
/// weight of upward jumps, so small values give negative drift.
pub fn random_a(rng: &mut impl Rng, d: usize, up: f64) -> BTreeMap<i64, Block> {
    let weights = [0.3, 0.9, 0.5, 0.5 * up, 0.15 * up];
    let mut a = BTreeMap::new();
    for (idx, off) in (-2i64..=2).enumerate() {
        let m = Block::from_fn(d, d, |_, _| weights[idx] * rng.random_range(0.1..1.0));
        a.insert(off, m);
    }
    for i in 0..d {
        let s: f64 = a.values().map(|m| m.row(i).sum()).sum();
        for m in a.values_mut() {
            for j in 0..d {
                m[(i, j)] /= s;
            }
        }
    }
    a
}

/// Random `A`-sequence without jumps below `-1`, for M/G/1 boundaries.
pub fn random_a_skip_free(rng: &mut impl Rng, d: usize, up: f64) -> BTreeMap<i64, Block> {
    let mut a = random_a(rng, d, up);
    let deep = a.remove(&-2).unwrap();
    *a.get_mut(&-1).unwrap() += deep;
    a
}

/// Seeded reflected walk with `d` phases, jumps in `-2..=2` and mean drift
/// below `-0.05`.
pub fn random_reflected(seed: u64, d: usize) -> GIG1Model {
    let mut rng = rng(seed);
    loop {
        let a = random_a(&mut rng, d, 1.0);
        if let Ok(model) = GIG1Model::reflected(d, a) {
            if bmtrunc::gig1::mean_drift(&model).map(|x| x < -0.05).unwrap_or(false) {
                return model;
            }
        }
    }
}
