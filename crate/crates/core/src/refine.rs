//! Refinement of a raw initial scatter estimate into a well-conditioned
//! (center, scatter) pair: keep the estimate's eigenvectors, replace its
//! eigenvalues by robust univariate variances of the principal scores, and
//! estimate the center in sphered coordinates.

use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, SymMatrix};
use crate::univariate::uni_mcd_reweighted;

/// A refined, well-conditioned starting fit in standardized coordinates.
#[derive(Debug, Clone)]
pub struct RefinedFit {
    pub center: Vec<f64>,
    pub scatter: SymMatrix,
    /// Eigenvalue ratio λ₁/λ_p of the refined scatter's diagonal.
    pub condition: f64,
}

/// Refines `s_init` against the standardized data `z`.
///
/// Rejects the start with [`Error::IllConditioned`] when the initial
/// estimate's eigenvalue ratio reaches `kappa_max` (or the smallest
/// eigenvalue is not positive) — such a start would only mislead the
/// concentration steps.
pub fn refine(s_init: &SymMatrix, z: &DataMatrix, kappa_max: f64) -> Result<RefinedFit> {
    let (n, p) = (z.rows(), z.cols());
    if n <= 2 * p {
        return Err(Error::InvalidInput(format!(
            "need n > 2p to refine, got n = {n}, p = {p}"
        )));
    }
    let eig = s_init.sym_eigen()?;
    let (lam_max, lam_min) = (eig.values[0], eig.values[p - 1]);
    if lam_min <= 0.0 {
        return Err(Error::IllConditioned(f64::INFINITY));
    }
    let condition = lam_max / lam_min;
    if condition >= kappa_max {
        return Err(Error::IllConditioned(condition));
    }

    // Scores T = Z·V; robust variance of each score column becomes the
    // refined eigenvalue.
    let mut scores = vec![0.0; n];
    let mut variances = vec![0.0; p];
    for k in 0..p {
        for i in 0..n {
            let row = z.row(i);
            let mut s = 0.0;
            for j in 0..p {
                s += row[j] * eig.vector_entry(j, k);
            }
            scores[i] = s;
        }
        let fit = uni_mcd_reweighted(&scores)?;
        variances[k] = fit.scale * fit.scale;
    }
    let scatter = eig.reassemble(&variances);

    // Center: robust univariate locations of the sphered data Z·Σ̂^{−1/2},
    // mapped back through Σ̂^{1/2}.
    let inv_half = scatter.sym_power(-0.5)?;
    let half = scatter.sym_power(0.5)?;
    let mut loc_sphered = vec![0.0; p];
    let mut col = vec![0.0; n];
    for k in 0..p {
        for i in 0..n {
            let row = z.row(i);
            let mut s = 0.0;
            for j in 0..p {
                s += row[j] * inv_half.get(j, k);
            }
            col[i] = s;
        }
        loc_sphered[k] = uni_mcd_reweighted(&col)?.location;
    }
    let center = half.mul_vec(&loc_sphered);

    let diag_cond = {
        let mx = variances.iter().cloned().fold(f64::MIN, f64::max);
        let mn = variances.iter().cloned().fold(f64::MAX, f64::min);
        mx / mn
    };
    Ok(RefinedFit {
        center,
        scatter,
        condition: diag_cond,
    })
}
