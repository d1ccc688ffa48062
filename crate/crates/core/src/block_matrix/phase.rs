use nalgebra::DMatrix;

use super::{gth_solve, BlockStochasticMatrix, BlockVector};
use crate::error::{Error, Result};

/// Transition kernel of the phase process alone, with its stationary
/// vector when that is unique.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMatrix {
    psi: DMatrix<f64>,
    marginal: Option<Vec<f64>>,
}

impl PhaseMatrix {
    /// Validates that `psi` is square, non-negative and stochastic.
    pub fn new(psi: DMatrix<f64>, tol: f64) -> Result<Self> {
        if psi.nrows() != psi.ncols() || psi.nrows() == 0 {
            return Err(Error::Dimension("phase kernel must be square".into()));
        }
        for i in 0..psi.nrows() {
            if psi.row(i).iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "phase kernel row {i} has a negative entry"
                )));
            }
            let sum = psi.row(i).sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::NotStochastic { k: 0, i, sum });
            }
        }
        let marginal = gth_solve(&psi).ok();
        Ok(Self { psi, marginal })
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn d(&self) -> usize {
        self.psi.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.psi[(i, j)]
    }

    /// Stationary vector of the phase kernel, `None` if it has several
    /// closed classes.
    pub fn marginal(&self) -> Option<&[f64]> {
        self.marginal.as_deref()
    }
}

/// Phase kernel `psi(i, j) = sum_l p(k, i; l, j)`, verified to be the same
/// for every row level `k` within `tol`.
pub fn phase_matrix(p: &BlockStochasticMatrix, tol: f64) -> Result<PhaseMatrix> {
    let d = p.d();
    let kernel = |k: usize| {
        let mut m = DMatrix::zeros(d, d);
        for b in p.row(k).expect("representable row").values() {
            m += b;
        }
        m
    };
    let psi = kernel(0);
    let horizon = match p.tail() {
        None => p.levels(),
        Some(t) => p.levels().max(t.reach()) + 1,
    };
    for k in 1..horizon {
        let deviation = (kernel(k) - &psi).abs().max();
        if deviation > tol {
            return Err(Error::PhaseKernelVaries { k, deviation });
        }
    }
    PhaseMatrix::new(psi, p.row_tolerance().max(tol))
}

/// `init P^m` by repeated sparse vector-matrix products.
pub fn transient_distribution(
    p: &BlockStochasticMatrix,
    init: &BlockVector,
    m: usize,
) -> Result<BlockVector> {
    init.require_probability(1e-9, "initial distribution")?;
    if init.levels() > p.levels() {
        return Err(Error::Dimension(format!(
            "initial vector has {} levels, matrix {}",
            init.levels(),
            p.levels()
        )));
    }
    let mut x = BlockVector::from_flat(p.d(), {
        let mut v = init.as_slice().to_vec();
        v.resize(p.num_states(), 0.0);
        v
    })?;
    for _ in 0..m {
        x = p.left_mul(&x)?;
    }
    Ok(x)
}
