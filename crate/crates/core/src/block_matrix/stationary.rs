//! Stationary vectors by GTH state reduction.
//!
//! Elimination runs from the last state down and never subtracts, so small
//! probabilities deep in the tail keep their relative accuracy. Only the
//! nonzero pattern of the pivot row and column is touched per step, which
//! keeps banded (GI/G/1-like) truncations cheap.

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::{BlockStochasticMatrix, BlockVector};
use crate::error::{Error, Result, State};

/// Dense row-major square array.
struct Dense {
    n: usize,
    a: Vec<f64>,
}

impl Dense {
    fn from_matrix(p: &BlockStochasticMatrix) -> Self {
        let d = p.d();
        let n = p.num_states();
        let mut a = vec![0.0; n * n];
        for (k, row) in p.stored_rows().iter().enumerate() {
            for (&l, m) in row {
                for i in 0..d {
                    for j in 0..d {
                        a[(k * d + i) * n + l * d + j] += m[(i, j)];
                    }
                }
            }
        }
        Self { n, a }
    }

    fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let a = (0..n * n).map(|s| m[(s / n, s % n)]).collect();
        Self { n, a }
    }

    /// Closed communicating classes of the nonzero pattern, each sorted.
    fn closed_classes(&self) -> Vec<Vec<usize>> {
        let n = self.n;
        let mut g = DiGraph::<(), ()>::with_capacity(n, n * 3);
        let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
        for r in 0..n {
            for c in 0..n {
                if r != c && self.a[r * n + c] > 0.0 {
                    g.add_edge(nodes[r], nodes[c], ());
                }
            }
        }
        let sccs = tarjan_scc(&g);
        let mut comp = vec![0usize; n];
        for (ci, scc) in sccs.iter().enumerate() {
            for v in scc {
                comp[v.index()] = ci;
            }
        }
        let mut out: Vec<Vec<usize>> = sccs
            .iter()
            .enumerate()
            .filter(|(ci, scc)| {
                scc.iter().all(|v| {
                    g.neighbors(*v)
                        .all(|w| comp[w.index()] == *ci)
                })
            })
            .map(|(_, scc)| {
                let mut s: Vec<usize> = scc.iter().map(|v| v.index()).collect();
                s.sort_unstable();
                s
            })
            .collect();
        out.sort();
        out
    }

    fn restrict(&self, states: &[usize]) -> Dense {
        let m = states.len();
        let mut a = vec![0.0; m * m];
        for (r, &sr) in states.iter().enumerate() {
            for (c, &sc) in states.iter().enumerate() {
                a[r * m + c] = self.a[sr * self.n + sc];
            }
        }
        Dense { n: m, a }
    }

    /// GTH on an irreducible stochastic array. Consumes the array.
    fn gth(mut self) -> Vec<f64> {
        let n = self.n;
        if n == 1 {
            return vec![1.0];
        }
        let a = &mut self.a;
        let mut col_nz = Vec::with_capacity(n);
        let mut row_nz = Vec::with_capacity(n);
        for k in (1..n).rev() {
            row_nz.clear();
            col_nz.clear();
            let mut s = 0.0;
            for j in 0..k {
                let x = a[k * n + j];
                if x != 0.0 {
                    s += x;
                    row_nz.push(j);
                }
            }
            // Irreducibility guarantees s > 0.
            for i in 0..k {
                if a[i * n + k] != 0.0 {
                    a[i * n + k] /= s;
                    col_nz.push(i);
                }
            }
            for &i in &col_nz {
                let f = a[i * n + k];
                for &j in &row_nz {
                    a[i * n + j] += f * a[k * n + j];
                }
            }
        }
        let mut pi = vec![0.0; n];
        pi[0] = 1.0;
        for k in 1..n {
            pi[k] = (0..k).map(|i| pi[i] * a[i * n + k]).sum();
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|x| *x /= total);
        pi
    }

    /// Stationary vector supported on the unique closed class.
    fn solve(&self) -> std::result::Result<Vec<f64>, Vec<Vec<usize>>> {
        let classes = self.closed_classes();
        if classes.len() != 1 {
            return Err(classes);
        }
        let class = &classes[0];
        let sub = if class.len() == self.n {
            Dense {
                n: self.n,
                a: self.a.clone(),
            }
        } else {
            self.restrict(class)
        };
        let local = sub.gth();
        let mut pi = vec![0.0; self.n];
        for (&s, x) in class.iter().zip(local) {
            pi[s] = x;
        }
        Ok(pi)
    }
}

fn to_states(d: usize, classes: Vec<Vec<usize>>) -> Vec<Vec<State>> {
    classes
        .into_iter()
        .map(|c| c.into_iter().map(|s| (s / d, s % d)).collect())
        .collect()
}

/// Closed communicating classes of a finite matrix, as `(level, phase)` lists.
pub fn closed_classes(p: &BlockStochasticMatrix) -> Result<Vec<Vec<State>>> {
    if !p.is_finite() {
        return Err(Error::InvalidArgument(
            "class structure needs a finite matrix".into(),
        ));
    }
    Ok(to_states(p.d(), Dense::from_matrix(p).closed_classes()))
}

/// Stationary probability vector of a finite stochastic matrix with exactly
/// one closed class. Transient states get zero mass.
pub fn stationary(p: &BlockStochasticMatrix) -> Result<BlockVector> {
    if !p.is_finite() {
        return Err(Error::InvalidArgument(
            "stationary solve needs a finite matrix; truncate first".into(),
        ));
    }
    if p.is_substochastic() {
        return Err(Error::InvalidArgument(
            "stationary solve needs a stochastic matrix".into(),
        ));
    }
    let pi = Dense::from_matrix(p)
        .solve()
        .map_err(|c| Error::MultipleClosedClasses(to_states(p.d(), c)))?;
    BlockVector::from_flat(p.d(), pi)
}

/// Stationary vector of a small dense stochastic matrix.
pub fn gth_solve(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Dimension("square non-empty matrix expected".into()));
    }
    Dense::from_dmatrix(m)
        .solve()
        .map_err(|c| Error::MultipleClosedClasses(to_states(1, c)))
}
