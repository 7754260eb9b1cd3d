//! Data-parallel estimation: partition the observations into blocks, fit
//! each block independently, aggregate the block fits robustly (entrywise
//! median → KL ranking → single-pass pooling), then reweight and flag with
//! the work again distributed over the blocks.
//!
//! Determinism contract: identical (data, config, seed) produce identical
//! results to the last bit regardless of how many worker threads actually
//! run. Every cross-block reduction folds in a fixed order keyed by block
//! id or ranking position, and per-row passes are indexed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::concentration::{converge, robust_distances};
use crate::error::{Error, Result};
use crate::estimator::{
    destandardize, raw_fit_standardized, EstimatorConfig, OutlierReport, ReweightedFit, StartTag,
};
use crate::matrix::{DataMatrix, SymMatrix};
use crate::refine::RefinedFit;
use crate::stats::{chi2_quantile, truncation_factor};
use crate::univariate::{standardize, ColumnScaling};

/// Configuration of the parallel estimator.
#[derive(Debug, Clone)]
pub struct ParallelConfig {
    pub base: EstimatorConfig,
    /// Minimum observations per dimension per block; drives the block count.
    pub omega: usize,
    /// Explicit block count, bypassing the ω rule.
    pub q_override: Option<usize>,
    /// Logical upper bound on the block count. Part of the configuration —
    /// results do not depend on the physical thread pool.
    pub max_threads: usize,
    pub seed: u64,
}

impl Default for ParallelConfig {
    fn default() -> Self {
        ParallelConfig {
            base: EstimatorConfig::default(),
            omega: 4096,
            q_override: None,
            max_threads: std::thread::available_parallelism()
                .map(|v| v.get())
                .unwrap_or(1),
            seed: 0,
        }
    }
}

/// Block-count rule: q = min(max(⌊n/(p·ω)⌋, 1), max_threads).
pub fn choose_q(n: usize, p: usize, omega: usize, max_threads: usize) -> usize {
    let by_size = (n / (p * omega)).max(1);
    by_size.min(max_threads.max(1))
}

/// Seeded random partition into q blocks of m = ⌊n/q⌋ indices each; the
/// n mod q leftover indices are excluded from fitting (they are still
/// scored and flagged).
pub fn partition(n: usize, q: usize, seed: u64, p: usize) -> Result<Vec<Vec<usize>>> {
    debug_assert!(q >= 1);
    let m = n / q;
    if m <= 2 * p {
        return Err(Error::BlockTooSmall { m, p });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    Ok((0..q).map(|l| perm[l * m..(l + 1) * m].to_vec()).collect())
}

/// A raw per-block fit in the globally standardized frame.
#[derive(Debug, Clone)]
pub struct BlockFit {
    pub block_id: usize,
    pub m: usize,
    pub center: Vec<f64>,
    pub scatter: SymMatrix,
    pub log_det: f64,
    pub start_tag: StartTag,
    /// KL deviation from the entrywise median, filled during aggregation.
    pub kl_to_median: f64,
}

/// Entrywise median of block centers and scatter entries. With an even
/// number of fits the median is the midpoint of the two central order
/// statistics. The result is symmetric but need not be positive definite.
pub fn entrywise_median(fits: &[BlockFit]) -> (Vec<f64>, SymMatrix) {
    let q = fits.len();
    assert!(q >= 1);
    let p = fits[0].center.len();
    let median_of = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if v.len() % 2 == 1 {
            v[v.len() / 2]
        } else {
            0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
        }
    };
    let mut center = vec![0.0; p];
    for j in 0..p {
        center[j] = median_of(fits.iter().map(|f| f.center[j]).collect());
    }
    let mut scatter = SymMatrix::zeros(p);
    for j in 0..p {
        for k in 0..=j {
            scatter.set(
                j,
                k,
                median_of(fits.iter().map(|f| f.scatter.get(j, k)).collect()),
            );
        }
    }
    (center, scatter)
}

/// KL-style deviation between fits (a, A) and (b, B):
/// trace(AB⁻¹) − p − log det(AB⁻¹) + (a−b)ᵀB⁻¹(a−b).
///
/// B must be positive definite; A need not be — a non-PD A yields +∞,
/// which simply ranks that comparison last.
pub fn kl_deviation(a: &[f64], a_mat: &SymMatrix, b: &[f64], b_mat: &SymMatrix) -> Result<f64> {
    let p = b_mat.dim();
    let b_factor = b_mat.cholesky()?;
    let b_inv = b_mat.inverse(&b_factor);
    let mut trace = 0.0;
    for i in 0..p {
        for j in 0..p {
            trace += a_mat.get(i, j) * b_inv.get(j, i);
        }
    }
    let log_det_a = match a_mat.cholesky() {
        Ok(f) => f.log_det(),
        Err(_) => return Ok(f64::INFINITY),
    };
    let mut diff = vec![0.0; p];
    for j in 0..p {
        diff[j] = a[j] - b[j];
    }
    Ok(trace - p as f64 - (log_det_a - b_factor.log_det()) + b_inv.quad_form(&diff))
}

/// Running pooled moments: Λ accumulates centered sums of squares as if the
/// kept blocks' observations had been concatenated.
#[derive(Debug, Clone)]
pub struct PooledState {
    pub sscp: SymMatrix,
    pub center: Vec<f64>,
    pub count: usize,
}

impl PooledState {
    /// Starts from one block's moments: Λ = (m−1)·Σ̂, count = m.
    pub fn init(center: &[f64], scatter: &SymMatrix, m: usize) -> Self {
        PooledState {
            sscp: scatter.scale((m - 1) as f64),
            center: center.to_vec(),
            count: m,
        }
    }

    /// Folds another block in one pass. Exact for classical moments: the
    /// result equals the moments of the concatenated observations.
    pub fn fold(&mut self, center: &[f64], sscp: &SymMatrix, m: usize) {
        let p = self.center.len();
        let n0 = self.count as f64;
        let m1 = m as f64;
        let mut diff = vec![0.0; p];
        for j in 0..p {
            diff[j] = center[j] - self.center[j];
        }
        let mut new_sscp = self.sscp.clone();
        for j in 0..p {
            for k in 0..=j {
                let v = new_sscp.get(j, k)
                    + sscp.get(j, k)
                    + diff[j] * diff[k] * n0 * m1 / (n0 + m1);
                new_sscp.set(j, k, v);
            }
        }
        for j in 0..p {
            self.center[j] = (n0 * self.center[j] + m1 * center[j]) / (n0 + m1);
        }
        self.sscp = new_sscp;
        self.count += m;
    }

    /// The pooled covariance Λ/(count − 1).
    pub fn covariance(&self) -> SymMatrix {
        self.sscp.scale(1.0 / (self.count as f64 - 1.0))
    }
}

/// Ranks block fits by KL deviation from the entrywise median (ties by
/// block id), keeps the ⌈q/2⌉ most central, and pools them in ranking
/// order. Returns the aggregated raw (center, scatter).
pub fn select_and_pool(fits: &mut [BlockFit]) -> Result<(Vec<f64>, SymMatrix)> {
    let q = fits.len();
    assert!(q >= 1);
    let (med_center, med_scatter) = entrywise_median(fits);
    for f in fits.iter_mut() {
        f.kl_to_median = kl_deviation(&med_center, &med_scatter, &f.center, &f.scatter)?;
    }
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&x, &y| {
        fits[x]
            .kl_to_median
            .partial_cmp(&fits[y].kl_to_median)
            .unwrap()
            .then(fits[x].block_id.cmp(&fits[y].block_id))
    });
    let keep = q.div_ceil(2);

    let first = &fits[order[0]];
    let mut pooled = PooledState::init(&first.center, &first.scatter, first.m);
    for &idx in &order[1..keep] {
        let f = &fits[idx];
        pooled.fold(&f.center, &f.scatter.scale((f.m - 1) as f64), f.m);
    }
    Ok((pooled.center.clone(), pooled.covariance()))
}

struct BlockReweight {
    count: usize,
    center: Vec<f64>,
    sscp: SymMatrix,
    weights: Vec<bool>,
}

/// Distributed reweighting: each block computes local weighted moments under
/// the raw fit, the coordinator pools them with the actual weighted counts,
/// and the truncation consistency factor is applied once at the end.
pub fn distributed_reweight(
    z: &DataMatrix,
    blocks: &[Vec<usize>],
    raw_center: &[f64],
    raw_scatter: &SymMatrix,
    flag_quantile: f64,
) -> Result<(Vec<f64>, SymMatrix, Vec<bool>)> {
    let p = z.cols();
    let cutoff = chi2_quantile(p, flag_quantile)?.sqrt();
    let factor = raw_scatter.cholesky()?;

    let locals: Vec<Result<BlockReweight>> = blocks
        .par_iter()
        .map(|idx| {
            let mut weights = vec![false; idx.len()];
            let mut count = 0usize;
            let mut mean = vec![0.0; p];
            let mut y = vec![0.0; p];
            for (slot, &i) in idx.iter().enumerate() {
                let row = z.row(i);
                for j in 0..p {
                    y[j] = row[j] - raw_center[j];
                }
                factor.forward_solve_in_place(&mut y);
                let d = crate::matrix::dot(&y, &y).sqrt();
                if d <= cutoff {
                    weights[slot] = true;
                    count += 1;
                    for j in 0..p {
                        mean[j] += z.get(i, j);
                    }
                }
            }
            if count == 0 {
                return Ok(BlockReweight {
                    count,
                    center: mean,
                    sscp: SymMatrix::zeros(p),
                    weights,
                });
            }
            for m in &mut mean {
                *m /= count as f64;
            }
            let mut sscp = SymMatrix::zeros(p);
            let mut d = vec![0.0; p];
            for (slot, &i) in idx.iter().enumerate() {
                if weights[slot] {
                    let row = z.row(i);
                    for j in 0..p {
                        d[j] = row[j] - mean[j];
                    }
                    sscp.rank_one_update(1.0, &d);
                }
            }
            Ok(BlockReweight {
                count,
                center: mean,
                sscp,
                weights,
            })
        })
        .collect();

    // Fold in block-id order for bit-determinism.
    let mut pooled: Option<PooledState> = None;
    let mut weights = vec![false; z.rows()];
    for (idx, local) in blocks.iter().zip(locals) {
        let local = local?;
        for (slot, &i) in idx.iter().enumerate() {
            weights[i] = local.weights[slot];
        }
        if local.count == 0 {
            continue;
        }
        match pooled.as_mut() {
            None => {
                pooled = Some(PooledState {
                    sscp: local.sscp,
                    center: local.center,
                    count: local.count,
                });
            }
            Some(state) => state.fold(&local.center, &local.sscp, local.count),
        }
    }
    let pooled = pooled.ok_or(Error::NoInliers)?;
    if pooled.count <= p {
        return Err(Error::NoInliers);
    }
    let scatter = pooled
        .covariance()
        .scale(truncation_factor(flag_quantile, p));
    Ok((pooled.center.clone(), scatter, weights))
}

/// Re-expresses a previous fit (any frame) in the current standardized
/// frame, to serve as a warm concentration start.
fn warm_start_in_frame(prev: &ReweightedFit, scaling: &ColumnScaling) -> Result<RefinedFit> {
    let p = scaling.width();
    if prev.width() != p {
        return Err(Error::WidthMismatch {
            expected: p,
            got: prev.width(),
        });
    }
    let (c_data, s_data) = destandardize(&prev.center_rew, &prev.scatter_rew, &prev.scaling);
    let mut center = vec![0.0; p];
    for j in 0..p {
        center[j] = (c_data[j] - scaling.columns[j].location) / scaling.columns[j].scale;
    }
    let mut scatter = SymMatrix::zeros(p);
    for j in 0..p {
        for k in 0..=j {
            scatter.set(
                j,
                k,
                s_data.get(j, k) / (scaling.columns[j].scale * scaling.columns[k].scale),
            );
        }
    }
    Ok(RefinedFit {
        center,
        scatter,
        condition: 1.0,
    })
}

fn gather_rows(z: &DataMatrix, idx: &[usize]) -> DataMatrix {
    let p = z.cols();
    let mut data = Vec::with_capacity(idx.len() * p);
    for &i in idx {
        data.extend_from_slice(z.row(i));
    }
    DataMatrix::new(idx.len(), p, data)
}

/// The full parallel pipeline. Returns the fit plus an outlier report
/// covering every row of `x`, including any partition remainder.
pub fn fit_parallel(
    x: &DataMatrix,
    config: &ParallelConfig,
    warm_start: Option<&ReweightedFit>,
) -> Result<(ReweightedFit, OutlierReport)> {
    config.base.validated()?;
    let (n, p) = (x.rows(), x.cols());
    if n <= 2 * p {
        return Err(Error::InvalidInput(format!(
            "need n > 2p, got n = {n}, p = {p}"
        )));
    }
    let q = config
        .q_override
        .unwrap_or_else(|| choose_q(n, p, config.omega, config.max_threads))
        .max(1);

    let (z, scaling) = standardize(x)?;
    let strategy = config.base.variant.strategy();
    let warm = match warm_start {
        Some(prev) => Some(warm_start_in_frame(prev, &scaling)?),
        None => None,
    };

    if q == 1 {
        // Degenerate topology: identical to the serial pipeline.
        let (raw, tag) = match &warm {
            Some(start) => (
                converge(
                    &z,
                    start,
                    config.base.h(n),
                    config.base.kappa_max,
                    strategy,
                    config.base.max_iter,
                )?,
                StartTag::Warm,
            ),
            None => raw_fit_standardized(&z, &config.base)?,
        };
        let (center_rew, scatter_rew, weights) =
            crate::estimator::reweight(&z, &raw.center, &raw.scatter, config.base.flag_quantile)?;
        let fit = ReweightedFit {
            center_raw: raw.center,
            center_rew,
            scatter_raw: raw.scatter,
            scatter_rew,
            scaling,
            chosen_start: tag,
            weights,
        };
        let report = flag_standardized(&z, &fit, config.base.flag_quantile)?;
        return Ok((fit, report));
    }

    let blocks = partition(n, q, config.seed, p)?;
    let m = n / q;
    let h_block = config.base.h(m);
    if h_block <= p {
        return Err(Error::BlockTooSmall { m, p });
    }

    let results: Vec<Option<BlockFit>> = blocks
        .par_iter()
        .enumerate()
        .map(|(block_id, idx)| {
            let zb = gather_rows(&z, idx);
            let fitted = match &warm {
                Some(start) => converge(
                    &zb,
                    start,
                    h_block,
                    config.base.kappa_max,
                    strategy,
                    config.base.max_iter,
                )
                .map(|c| (c, StartTag::Warm)),
                None => raw_fit_standardized(&zb, &config.base),
            };
            fitted.ok().map(|(cand, start_tag)| BlockFit {
                block_id,
                m: idx.len(),
                center: cand.center,
                scatter: cand.scatter,
                log_det: cand.log_det,
                start_tag,
                kl_to_median: 0.0,
            })
        })
        .collect();

    let mut valid: Vec<BlockFit> = results.into_iter().flatten().collect();
    if valid.len() < q.div_ceil(2) {
        return Err(Error::TooFewValidBlocks {
            ok: valid.len(),
            q,
        });
    }
    let chosen_start = valid[0].start_tag;
    let (raw_center, raw_scatter) = select_and_pool(&mut valid)?;

    let (center_rew, scatter_rew, weights) = distributed_reweight(
        &z,
        &blocks,
        &raw_center,
        &raw_scatter,
        config.base.flag_quantile,
    )?;

    let fit = ReweightedFit {
        center_raw: raw_center,
        center_rew,
        scatter_raw: raw_scatter,
        scatter_rew,
        scaling,
        chosen_start,
        weights,
    };
    let report = flag_standardized(&z, &fit, config.base.flag_quantile)?;
    Ok((fit, report))
}

/// Flags every row of already-standardized data under the reweighted fit.
fn flag_standardized(
    z: &DataMatrix,
    fit: &ReweightedFit,
    flag_quantile: f64,
) -> Result<OutlierReport> {
    let cutoff = chi2_quantile(z.cols(), flag_quantile)?.sqrt();
    let distances = robust_distances(z, &fit.center_rew, &fit.scatter_rew)?;
    let flags = distances.iter().map(|&d| d > cutoff).collect();
    Ok(OutlierReport {
        distances,
        flags,
        cutoff,
    })
}
