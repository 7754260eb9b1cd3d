//! Univariate raw and reweighted MCD location/scale.
//!
//! The raw estimator scans contiguous h-subsets of the sorted sample with
//! O(1) sliding-window moment updates, so the whole fit is O(n log n). These
//! estimates drive both per-column standardization and the eigenvalue
//! refinement of initial scatter estimates.

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::stats::{chi2_quantile, consistency_factor, truncation_factor};

/// A robust location/scale pair in data units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocScale {
    pub location: f64,
    pub scale: f64,
}

/// Per-column scaling of a data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnScaling {
    pub columns: Vec<LocScale>,
}

impl ColumnScaling {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// An identity scaling (location 0, scale 1 per column).
    pub fn identity(width: usize) -> Self {
        ColumnScaling {
            columns: vec![
                LocScale {
                    location: 0.0,
                    scale: 1.0
                };
                width
            ],
        }
    }
}

/// Default subset size h̃ = ⌊n/2⌋ + 1, the most robust coverage.
pub fn default_h(n: usize) -> usize {
    n / 2 + 1
}

fn check_finite(x: &[f64]) -> Result<()> {
    if let Some(row) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidValue { row });
    }
    Ok(())
}

/// Raw univariate MCD: mean and consistency-corrected standard deviation of
/// the contiguous sorted h-subset with the smallest variance.
///
/// Ties among minimal-variance windows go to the smallest start index.
pub fn uni_mcd_raw(x: &[f64], h: usize) -> Result<LocScale> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    if h < default_h(n) || h > n {
        return Err(Error::InvalidInput(format!(
            "subset size {h} outside [{}..{n}]",
            default_h(n)
        )));
    }
    check_finite(x)?;

    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Shift by the midrange of the central window to keep the running sums
    // well-conditioned; the minimizing window is shift-invariant.
    let shift = sorted[n / 2];
    for v in &mut sorted {
        *v -= shift;
    }

    // Sliding sums over windows [start, start + h).
    let mut s1: f64 = sorted[..h].iter().sum();
    let mut s2: f64 = sorted[..h].iter().map(|v| v * v).sum();
    let hf = h as f64;
    let mut best_start = 0usize;
    let mut best_sse = s2 - s1 * s1 / hf;
    let mut best_sum = s1;
    for start in 1..=(n - h) {
        let out = sorted[start - 1];
        let inn = sorted[start + h - 1];
        s1 += inn - out;
        s2 += inn * inn - out * out;
        let sse = s2 - s1 * s1 / hf;
        if sse < best_sse {
            best_sse = sse;
            best_start = start;
            best_sum = s1;
        }
    }

    // Guard against round-off in the sliding sums by recomputing the winning
    // window's moments directly.
    let win = &sorted[best_start..best_start + h];
    let mean = best_sum / hf;
    let sse: f64 = win.iter().map(|v| (v - mean) * (v - mean)).sum();
    let var = sse / (hf - 1.0);
    if !(var > 0.0) {
        return Err(Error::DegenerateScale);
    }
    let factor = consistency_factor(h as f64 / n as f64, 1).sqrt();
    Ok(LocScale {
        location: mean + shift,
        scale: var.sqrt() * factor,
    })
}

/// Reweighted univariate MCD at coverage h̃ = ⌊n/2⌋ + 1: raw fit, then the
/// classical mean/sd (with the 0.975-truncation correction) of observations
/// whose standardized raw distance is at most √(χ²_{1,0.975}).
pub fn uni_mcd_reweighted(x: &[f64]) -> Result<LocScale> {
    let n = x.len();
    let raw = uni_mcd_raw(x, default_h(n))?;
    let cutoff = reweight_cutoff(1);

    let mut count = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for &v in x {
        if ((v - raw.location) / raw.scale).abs() <= cutoff {
            // Welford update over the kept observations.
            count += 1;
            let d = v - mean;
            mean += d / count as f64;
            m2 += d * (v - mean);
        }
    }
    if count < 2 {
        return Err(Error::DegenerateScale);
    }
    let var = m2 / (count as f64 - 1.0);
    if !(var > 0.0) {
        return Err(Error::DegenerateScale);
    }
    let factor = truncation_factor(0.975, 1).sqrt();
    Ok(LocScale {
        location: mean,
        scale: var.sqrt() * factor,
    })
}

/// √(χ²_{p,0.975}), the distance cutoff used for reweighting and flagging.
pub fn reweight_cutoff(p: usize) -> f64 {
    chi2_quantile(p, 0.975)
        .expect("0.975 is a valid probability")
        .sqrt()
}

/// Standardizes each column by its reweighted univariate MCD fit.
pub fn standardize(x: &DataMatrix) -> Result<(DataMatrix, ColumnScaling)> {
    let (n, p) = (x.rows(), x.cols());
    if n <= 2 * p {
        return Err(Error::InvalidInput(format!(
            "need n > 2p, got n = {n}, p = {p}"
        )));
    }
    if let Some(row) = x.first_invalid_row() {
        return Err(Error::InvalidValue { row });
    }
    let mut columns = Vec::with_capacity(p);
    for j in 0..p {
        let col = x.column(j);
        let ls = uni_mcd_reweighted(&col).map_err(|e| match e {
            Error::DegenerateScale => Error::DegenerateColumn(j),
            other => other,
        })?;
        columns.push(ls);
    }
    let mut z = DataMatrix::zeros(n, p);
    for i in 0..n {
        let row = x.row(i);
        let out = z.row_mut(i);
        for j in 0..p {
            out[j] = (row[j] - columns[j].location) / columns[j].scale;
        }
    }
    Ok((z, ColumnScaling { columns }))
}

/// Applies an existing scaling to new data (used when scoring under a fit).
pub fn apply_scaling(x: &DataMatrix, scaling: &ColumnScaling) -> Result<DataMatrix> {
    let (n, p) = (x.rows(), x.cols());
    if p != scaling.width() {
        return Err(Error::WidthMismatch {
            expected: scaling.width(),
            got: p,
        });
    }
    if let Some(row) = x.first_invalid_row() {
        return Err(Error::InvalidValue { row });
    }
    let mut z = DataMatrix::zeros(n, p);
    for i in 0..n {
        let row = x.row(i);
        let out = z.row_mut(i);
        for j in 0..p {
            out[j] = (row[j] - scaling.columns[j].location) / scaling.columns[j].scale;
        }
    }
    Ok(z)
}
