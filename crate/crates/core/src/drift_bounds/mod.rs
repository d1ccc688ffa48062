//! Drift certificates and the truncation error bounds they imply.
//!
//! For a block-monotone, irreducible `P` with `P v <= gamma v + b 1_0`, the
//! stationary vector `pi_n` of the last-column-block-augmented truncation at
//! level `n` satisfies, for every `m >= 1`,
//!
//! ```text
//! |pi_n - pi| <= 4 gamma^m b / (1 - gamma) + 2 m sum_i pi_n(n, i)           (top-mass form)
//! |pi_n - pi| <= b / (1 - gamma) * (4 gamma^m + 2 m sum_i 1 / v(n, i))       (Lyapunov form)
//! ```
//!
//! The Lyapunov form also holds when `P` is only block-wise dominated by a
//! certified block-monotone chain, with that chain's certificate.

mod certificate;
mod compare;

use serde::{Deserialize, Serialize};

pub use certificate::{
    lift_certificate, verify_certificate, DriftCertificate, DriftCheck, DriftViolation,
    LyapunovShape, LyapunovVector, DEFAULT_VERIFY_TOLERANCE,
};
pub use compare::{
    compare_against_oracle, reference_stationary, BoundRoute, ReferenceSolution, REFERENCE_GAP,
};

use crate::error::{Error, Result};

/// Which of the two bound forms to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// Uses the truncated chain's mass on its top level.
    TopMass,
    /// Uses only the Lyapunov vector at level `n`.
    Lyapunov,
}

/// Bounds at one truncation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    /// Minimiser of the Lyapunov-form bound.
    pub m_star: usize,
    pub bound1: Option<f64>,
    pub bound2: f64,
    pub measured_error: Option<f64>,
    pub reference_level: Option<usize>,
}

impl BoundReport {
    /// True when a measured error exceeds either bound by more than `tol`.
    pub fn is_violated(&self, tol: f64) -> bool {
        match self.measured_error {
            None => false,
            Some(err) => {
                err > self.bound2 + tol || self.bound1.is_some_and(|b1| err > b1 + tol)
            }
        }
    }
}

/// `10 * ceil(1 / (1 - gamma))`, with rounding noise below `1e-9` ignored
/// so that `gamma = 0.9` gives 100.
pub fn default_m_max(gamma: f64) -> usize {
    10 * (1.0 / (1.0 - gamma) - 1e-9).ceil().max(1.0) as usize
}

fn check_bound_inputs(cert: &DriftCertificate, m: usize) -> Result<()> {
    if cert.boundary_level() != 0 {
        return Err(Error::Certificate(format!(
            "bounds need a boundary set of level 0, got K = {}; lift the certificate first",
            cert.boundary_level()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    Ok(())
}

fn inverse_v_sum(cert: &DriftCertificate, n: usize) -> Result<f64> {
    let vn = cert
        .v()
        .level(n)
        .ok_or_else(|| Error::Certificate(format!("v is undefined at level {n}")))?;
    Ok(vn.iter().map(|x| 1.0 / x).sum())
}

fn top_mass_value(gamma: f64, scale: f64, m: usize, top: f64) -> f64 {
    4.0 * gamma.powi(m as i32) * scale + 2.0 * m as f64 * top
}

fn lyapunov_value(gamma: f64, scale: f64, m: usize, inv_v: f64) -> f64 {
    scale * (4.0 * gamma.powi(m as i32) + 2.0 * m as f64 * inv_v)
}

/// Both bounds at one `(n, m)`. The top-mass form is evaluated only when
/// `pi_n(n, .)` is supplied.
pub fn truncation_bound(
    cert: &DriftCertificate,
    m: usize,
    n: usize,
    top_mass: Option<&[f64]>,
) -> Result<BoundReport> {
    check_bound_inputs(cert, m)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let inv_v = inverse_v_sum(cert, n)?;
    let bound2 = lyapunov_value(cert.gamma(), cert.scale(), m, inv_v);
    let bound1 = top_mass.map(|t| top_mass_value(cert.gamma(), cert.scale(), m, t.iter().sum()));
    Ok(BoundReport {
        n,
        m_star: m,
        bound1,
        bound2,
        measured_error: None,
        reference_level: None,
    })
}

/// Exact minimiser over `m` in `1..=m_max` by scanning; ties go to the
/// smaller `m`.
pub fn optimize_m(
    cert: &DriftCertificate,
    n: usize,
    m_max: usize,
    which: BoundKind,
    top_mass: Option<&[f64]>,
) -> Result<(usize, f64)> {
    check_bound_inputs(cert, m_max)?;
    let (gamma, scale) = (cert.gamma(), cert.scale());
    let eval: Box<dyn Fn(usize) -> f64> = match which {
        BoundKind::Lyapunov => {
            let inv_v = inverse_v_sum(cert, n)?;
            Box::new(move |m| lyapunov_value(gamma, scale, m, inv_v))
        }
        BoundKind::TopMass => {
            let top: f64 = top_mass
                .ok_or_else(|| {
                    Error::InvalidArgument("top-mass bound needs pi_n(n, .)".into())
                })?
                .iter()
                .sum();
            Box::new(move |m| top_mass_value(gamma, scale, m, top))
        }
    };
    let mut best = (1, eval(1));
    for m in 2..=m_max {
        let value = eval(m);
        if value < best.1 {
            best = (m, value);
        }
    }
    Ok(best)
}

/// Both bounds at level `n`, each minimised over `m <= m_max`. `m_star`
/// is the Lyapunov-form minimiser.
pub fn optimized_bounds(
    cert: &DriftCertificate,
    n: usize,
    m_max: usize,
    top_mass: Option<&[f64]>,
) -> Result<BoundReport> {
    let (m_star, bound2) = optimize_m(cert, n, m_max, BoundKind::Lyapunov, None)?;
    let bound1 = match top_mass {
        Some(t) => Some(optimize_m(cert, n, m_max, BoundKind::TopMass, Some(t))?.1),
        None => None,
    };
    Ok(BoundReport {
        n,
        m_star,
        bound1,
        bound2,
        measured_error: None,
        reference_level: None,
    })
}
