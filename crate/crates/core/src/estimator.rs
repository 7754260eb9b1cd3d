//! The serial estimation pipeline: standardize, build the two deterministic
//! starts, refine, concentrate from each, keep the lower-determinant
//! candidate, reweight once, and flag.

use crate::concentration::{converge, robust_distances, CandidateResult, Strategy};
use crate::error::{Error, Result};
use crate::initial::{gsscm_lr, wrapped_covariance, WrapParams};
use crate::matrix::{DataMatrix, SymMatrix};
use crate::refine::refine;
use crate::stats::{chi2_quantile, truncation_factor};
use crate::univariate::{apply_scaling, standardize, ColumnScaling};

/// Which execution ladder rung to run. The variants differ only in how the
/// C-steps are carried out; their statistical output is the same.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Full moment recompute, distances through an explicit inverse.
    I,
    /// Full moment recompute, Cholesky-based distances and determinant.
    Id,
    /// Update-based moments with the rank-one fast path.
    Idc,
}

impl Variant {
    pub fn strategy(self) -> Strategy {
        match self {
            Variant::I => Strategy::Full,
            Variant::Id => Strategy::Cholesky,
            Variant::Idc => Strategy::Update,
        }
    }
}

/// Configuration of the serial estimator.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    /// Coverage fraction α; h = ⌊αn⌋. 0.5 is the most robust choice.
    pub alpha: f64,
    /// Condition-number threshold above which a fit counts as singular.
    pub kappa_max: f64,
    /// Chi-square quantile for the reweighting/flagging cutoff.
    pub flag_quantile: f64,
    pub variant: Variant,
    pub wrap_params: WrapParams,
    /// C-step iteration cap.
    pub max_iter: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            alpha: 0.5,
            kappa_max: 1000.0,
            flag_quantile: 0.975,
            variant: Variant::Idc,
            wrap_params: WrapParams::default(),
            max_iter: 100,
        }
    }
}

impl EstimatorConfig {
    pub fn validated(&self) -> Result<()> {
        if !(self.alpha >= 0.5 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in [0.5, 1), got {}",
                self.alpha
            )));
        }
        if !(self.flag_quantile > 0.0 && self.flag_quantile < 1.0) {
            return Err(Error::InvalidInput(format!(
                "flag quantile must lie in (0, 1), got {}",
                self.flag_quantile
            )));
        }
        if !(self.kappa_max > 1.0) {
            return Err(Error::InvalidInput(format!(
                "kappa_max must exceed 1, got {}",
                self.kappa_max
            )));
        }
        self.wrap_params.validated()?;
        Ok(())
    }

    pub fn h(&self, n: usize) -> usize {
        (self.alpha * n as f64).floor() as usize
    }
}

/// Which initial estimator won the determinant comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartTag {
    Wrapped,
    Gsscm,
    /// A previous fit supplied as the single concentration start.
    Warm,
}

/// The complete fitted model, stored in standardized coordinates with the
/// column scaling attached for conversion back to data units.
#[derive(Debug, Clone)]
pub struct ReweightedFit {
    pub center_raw: Vec<f64>,
    pub center_rew: Vec<f64>,
    pub scatter_raw: SymMatrix,
    pub scatter_rew: SymMatrix,
    pub scaling: ColumnScaling,
    pub chosen_start: StartTag,
    /// true for observations that entered the reweighted estimate.
    pub weights: Vec<bool>,
}

impl ReweightedFit {
    pub fn width(&self) -> usize {
        self.scaling.width()
    }
}

/// Per-observation robust distances and outlier flags.
#[derive(Debug, Clone)]
pub struct OutlierReport {
    pub distances: Vec<f64>,
    pub flags: Vec<bool>,
    pub cutoff: f64,
}

/// Runs both deterministic starts through refinement and concentration on
/// already-standardized data, returning the lower-determinant candidate.
///
/// A start that fails (ill-conditioned, singular during C-steps) is simply
/// dropped; only when both fail does the fit abort.
pub fn raw_fit_standardized(
    z: &DataMatrix,
    config: &EstimatorConfig,
) -> Result<(CandidateResult, StartTag)> {
    let n = z.rows();
    let h = config.h(n);
    let strategy = config.variant.strategy();

    let run = |start_matrix: Result<SymMatrix>| -> Result<CandidateResult> {
        let s = start_matrix?;
        let refined = refine(&s, z, config.kappa_max)?;
        converge(z, &refined, h, config.kappa_max, strategy, config.max_iter)
    };

    // The two start branches are independent; run them side by side.
    let (wrapped, gsscm) = rayon::join(
        || run(wrapped_covariance(z, &config.wrap_params)),
        || run(gsscm_lr(z)),
    );

    match (wrapped, gsscm) {
        (Ok(a), Ok(b)) => {
            if a.log_det <= b.log_det {
                Ok((a, StartTag::Wrapped))
            } else {
                Ok((b, StartTag::Gsscm))
            }
        }
        (Ok(a), Err(_)) => Ok((a, StartTag::Wrapped)),
        (Err(_), Ok(b)) => Ok((b, StartTag::Gsscm)),
        (Err(_), Err(_)) => Err(Error::BothStartsFailed),
    }
}

/// One reweighting step: classical moments over the observations whose raw
/// robust distance stays below the cutoff, times the truncation consistency
/// factor.
pub fn reweight(
    z: &DataMatrix,
    raw_center: &[f64],
    raw_scatter: &SymMatrix,
    flag_quantile: f64,
) -> Result<(Vec<f64>, SymMatrix, Vec<bool>)> {
    let p = z.cols();
    let cutoff = chi2_quantile(p, flag_quantile)?.sqrt();
    let distances = robust_distances(z, raw_center, raw_scatter)?;
    let weights: Vec<bool> = distances.iter().map(|&d| d <= cutoff).collect();
    let count = weights.iter().filter(|&&w| w).count();
    if count <= p {
        return Err(Error::NoInliers);
    }

    let mut center = vec![0.0; p];
    for (i, &w) in weights.iter().enumerate() {
        if w {
            let row = z.row(i);
            for j in 0..p {
                center[j] += row[j];
            }
        }
    }
    for c in &mut center {
        *c /= count as f64;
    }
    let mut sscp = SymMatrix::zeros(p);
    let mut d = vec![0.0; p];
    for (i, &w) in weights.iter().enumerate() {
        if w {
            let row = z.row(i);
            for j in 0..p {
                d[j] = row[j] - center[j];
            }
            sscp.rank_one_update(1.0, &d);
        }
    }
    let factor = truncation_factor(flag_quantile, p);
    let scatter = sscp.scale(factor / (count as f64 - 1.0));
    Ok((center, scatter, weights))
}

/// The full serial pipeline on raw data.
pub fn fit_serial(x: &DataMatrix, config: &EstimatorConfig) -> Result<ReweightedFit> {
    config.validated()?;
    let (n, p) = (x.rows(), x.cols());
    if n <= 2 * p {
        return Err(Error::InvalidInput(format!(
            "need n > 2p, got n = {n}, p = {p}"
        )));
    }
    let h = config.h(n);
    if h <= p {
        return Err(Error::InvalidInput(format!(
            "coverage h = {h} must exceed dimension {p}"
        )));
    }
    let (z, scaling) = standardize(x)?;
    let (raw, chosen_start) = raw_fit_standardized(&z, config)?;
    let (center_rew, scatter_rew, weights) =
        reweight(&z, &raw.center, &raw.scatter, config.flag_quantile)?;
    Ok(ReweightedFit {
        center_raw: raw.center,
        center_rew,
        scatter_raw: raw.scatter,
        scatter_rew,
        scaling,
        chosen_start,
        weights,
    })
}

/// Scores new data under an existing fit: robust distances against the
/// reweighted estimate, flags above the cutoff.
pub fn flag(x_new: &DataMatrix, fit: &ReweightedFit, config: &EstimatorConfig) -> Result<OutlierReport> {
    let z = apply_scaling(x_new, &fit.scaling)?;
    let cutoff = chi2_quantile(fit.width(), config.flag_quantile)?.sqrt();
    let distances = robust_distances(&z, &fit.center_rew, &fit.scatter_rew)?;
    let flags = distances.iter().map(|&d| d > cutoff).collect();
    Ok(OutlierReport {
        distances,
        flags,
        cutoff,
    })
}

/// Converts a fit from standardized coordinates back to data units.
pub fn destandardized_fit(fit: &ReweightedFit) -> (Vec<f64>, SymMatrix) {
    destandardize(&fit.center_rew, &fit.scatter_rew, &fit.scaling)
}

/// Maps any standardized (center, scatter) pair back to data units.
pub fn destandardize(
    center: &[f64],
    scatter: &SymMatrix,
    scaling: &ColumnScaling,
) -> (Vec<f64>, SymMatrix) {
    let p = scaling.width();
    let mut c = vec![0.0; p];
    for j in 0..p {
        c[j] = scaling.columns[j].location + scaling.columns[j].scale * center[j];
    }
    let mut s = SymMatrix::zeros(p);
    for j in 0..p {
        for k in 0..=j {
            s.set(
                j,
                k,
                scatter.get(j, k) * scaling.columns[j].scale * scaling.columns[k].scale,
            );
        }
    }
    (c, s)
}
