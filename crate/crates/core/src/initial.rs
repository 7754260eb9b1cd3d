//! The two deterministic starting scatter estimates: the covariance of
//! coordinate-wise wrapped data, and the linearly redescending generalized
//! spatial sign covariance matrix (GSSCM-LR).
//!
//! Both bound each observation's influence, so neither needs any sampling —
//! which is what makes the whole pipeline deterministic.

use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, SymMatrix};

/// Parameters of the wrapping transformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrapParams {
    pub b: f64,
    pub c: f64,
    pub q1: f64,
    pub q2: f64,
}

impl Default for WrapParams {
    fn default() -> Self {
        WrapParams {
            b: 1.5,
            c: 4.0,
            q1: 1.541,
            q2: 0.862,
        }
    }
}

impl WrapParams {
    /// Validates 0 < b < c and continuity of the transform at both knots
    /// (to 1e-3, the accuracy of the published constants).
    pub fn validated(self) -> Result<Self> {
        if !(self.b > 0.0 && self.c > self.b) {
            return Err(Error::InvalidInput(format!(
                "wrapping needs 0 < b < c, got b = {}, c = {}",
                self.b, self.c
            )));
        }
        let at_b = self.q1 * (self.q2 * (self.c - self.b)).tanh();
        if (at_b - self.b).abs() > 1e-3 {
            return Err(Error::InvalidInput(format!(
                "wrapping discontinuous at b: g(b⁺) = {at_b}, expected {}",
                self.b
            )));
        }
        let at_c = self.q1 * (self.q2 * 0.0_f64).tanh();
        if at_c.abs() > 1e-3 {
            return Err(Error::InvalidInput(format!(
                "wrapping discontinuous at c: g(c⁻) = {at_c}, expected 0"
            )));
        }
        Ok(self)
    }
}

/// Bounded odd transformation applied per coordinate:
/// identity inside [−b, b], a redescending tanh arc on b < |z| ≤ c, and a
/// hard zero beyond c.
pub fn wrap_scalar(z: f64, params: &WrapParams) -> f64 {
    let a = z.abs();
    if a <= params.b {
        z
    } else if a <= params.c {
        params.q1 * (params.q2 * (params.c - a)).tanh() * z.signum()
    } else {
        0.0
    }
}

/// Classical covariance (n−1 denominator, mean-centered) of the elementwise
/// wrapped data.
pub fn wrapped_covariance(z: &DataMatrix, params: &WrapParams) -> Result<SymMatrix> {
    let (n, p) = (z.rows(), z.cols());
    if n <= p {
        return Err(Error::InvalidInput(format!(
            "need n > p for a covariance, got n = {n}, p = {p}"
        )));
    }
    let mut wrapped = DataMatrix::zeros(n, p);
    for i in 0..n {
        let src = z.row(i);
        let dst = wrapped.row_mut(i);
        for j in 0..p {
            dst[j] = wrap_scalar(src[j], params);
        }
    }
    let mut mean = vec![0.0; p];
    for i in 0..n {
        let row = wrapped.row(i);
        for j in 0..p {
            mean[j] += row[j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = SymMatrix::zeros(p);
    for i in 0..n {
        let row = wrapped.row(i);
        for j in 0..p {
            let dj = row[j] - mean[j];
            for k in 0..=j {
                let v = cov.get(j, k) + dj * (row[k] - mean[k]);
                cov.set(j, k, v);
            }
        }
    }
    Ok(cov.scale(1.0 / (n as f64 - 1.0)))
}

/// Cutoffs of the linearly redescending radial weight: full weight up to A,
/// linear descent to zero at B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrCutoffs {
    pub a: f64,
    pub b: f64,
}

/// Linear-interpolation quantile of a sorted slice (type-7 convention).
fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n >= 1);
    let pos = prob * (n as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Derives the redescending cutoffs from the observed norms:
/// A = median, B = median + 1.5·IQR. Both are documented defaults and may be
/// overridden by passing explicit [`LrCutoffs`] to [`gsscm_lr_with_cutoffs`].
pub fn lr_cutoffs(norms: &[f64]) -> Result<LrCutoffs> {
    if norms.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least 2 norms for cutoffs".into(),
        ));
    }
    let mut sorted = norms.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = quantile_sorted(&sorted, 0.5);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    if !(iqr > 0.0) {
        return Err(Error::DegenerateNorms);
    }
    Ok(LrCutoffs {
        a: median,
        b: median + 1.5 * iqr,
    })
}

/// The radial weight ξ(r): 1 up to A, (B−r)/(B−A) on (A, B], 0 beyond B.
pub fn lr_weight(r: f64, cutoffs: &LrCutoffs) -> f64 {
    if r <= cutoffs.a {
        1.0
    } else if r <= cutoffs.b {
        (cutoffs.b - r) / (cutoffs.b - cutoffs.a)
    } else {
        0.0
    }
}

/// GSSCM-LR with cutoffs derived from the data's own norms.
pub fn gsscm_lr(z: &DataMatrix) -> Result<SymMatrix> {
    let norms: Vec<f64> = (0..z.rows())
        .map(|i| z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let cutoffs = lr_cutoffs(&norms)?;
    gsscm_lr_with_cutoffs(z, &cutoffs)
}

/// Weighted second-moment matrix S̃₂ = (1/n) Σ ξ²(‖z_i‖) z_i z_iᵀ.
pub fn gsscm_lr_with_cutoffs(z: &DataMatrix, cutoffs: &LrCutoffs) -> Result<SymMatrix> {
    let (n, p) = (z.rows(), z.cols());
    if n <= p {
        return Err(Error::InvalidInput(format!(
            "need n > p for a scatter estimate, got n = {n}, p = {p}"
        )));
    }
    if !(cutoffs.a >= 0.0 && cutoffs.b > cutoffs.a) {
        return Err(Error::InvalidInput(format!(
            "cutoffs must satisfy 0 ≤ A < B, got A = {}, B = {}",
            cutoffs.a, cutoffs.b
        )));
    }
    let mut acc = SymMatrix::zeros(p);
    let mut any = false;
    for i in 0..n {
        let row = z.row(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let w = lr_weight(norm, cutoffs);
        if w == 0.0 {
            continue;
        }
        any = true;
        acc.rank_one_update(w * w, row);
    }
    if !any {
        return Err(Error::AllWeightsZero);
    }
    Ok(acc.scale(1.0 / n as f64))
}
