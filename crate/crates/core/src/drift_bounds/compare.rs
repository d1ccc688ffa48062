use rayon::prelude::*;

use super::{optimized_bounds, BoundReport, DriftCertificate};
use crate::block_matrix::{lcb_truncate, stationary, tv_distance, BlockStochasticMatrix, BlockVector};
use crate::error::{Error, Result};

/// Gap allowed between the reference solutions at `L` and `2L`.
pub const REFERENCE_GAP: f64 = 1e-10;

/// How the certificate relates to the model being truncated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundRoute {
    /// The certificate is for the block-monotone model itself.
    #[default]
    Direct,
    /// The certificate belongs to a block-monotone chain that dominates the
    /// model; only the Lyapunov form applies.
    Dominated,
}

/// Stationary vector used as ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub pi: BlockVector,
    /// Truncation level of `pi`, or the top stored level for finite models.
    pub level: usize,
    /// Distance to the solution at twice the level; zero for finite models.
    pub gap: f64,
}

/// Exact stationary vector for finite models. For models with a tail, the
/// truncation at `level`, accepted only if it agrees with the truncation at
/// `2 * level` to within [`REFERENCE_GAP`].
pub fn reference_stationary(
    model: &BlockStochasticMatrix,
    level: usize,
) -> Result<ReferenceSolution> {
    if let Some(max) = model.max_level() {
        return Ok(ReferenceSolution {
            pi: stationary(model)?,
            level: max,
            gap: 0.0,
        });
    }
    let (coarse, fine) = rayon::join(
        || stationary(&lcb_truncate(model, level)?),
        || stationary(&lcb_truncate(model, 2 * level)?),
    );
    let (coarse, fine) = (coarse?, fine?);
    let gap = tv_distance(&coarse, &fine);
    if !(gap < REFERENCE_GAP) {
        return Err(Error::ReferenceNotConverged {
            gap,
            level,
            doubled: 2 * level,
        });
    }
    Ok(ReferenceSolution {
        pi: coarse,
        level,
        gap,
    })
}

/// Truncates `model` at every `n`, measures the distance to the reference
/// and evaluates the bounds with `m` optimised up to `m_max`. Reports come
/// back in the order of `n_list`.
pub fn compare_against_oracle(
    model: &BlockStochasticMatrix,
    n_list: &[usize],
    cert: &DriftCertificate,
    m_max: usize,
    reference_level: usize,
    route: BoundRoute,
) -> Result<Vec<BoundReport>> {
    if cert.d() != model.d() {
        return Err(Error::Dimension(format!(
            "certificate has d = {}, model d = {}",
            cert.d(),
            model.d()
        )));
    }
    let Some(&top) = n_list.iter().max() else {
        return Ok(Vec::new());
    };
    if model.is_finite() {
        if top > model.levels() - 1 {
            return Err(Error::LevelOutOfRange {
                requested: top,
                max: model.levels() - 1,
            });
        }
    } else if reference_level < top {
        return Err(Error::InvalidArgument(format!(
            "reference level {reference_level} is below the largest n = {top}"
        )));
    }
    let reference = reference_stationary(model, reference_level)?;
    n_list
        .par_iter()
        .map(|&n| {
            let pi_n = stationary(&lcb_truncate(model, n)?)?;
            let top_mass = match route {
                BoundRoute::Direct => Some(pi_n.level(n)),
                BoundRoute::Dominated => None,
            };
            let mut report = optimized_bounds(cert, n, m_max, top_mass)?;
            report.measured_error = Some(tv_distance(&pi_n, &reference.pi));
            report.reference_level = Some(reference.level);
            Ok(report)
        })
        .collect()
}
