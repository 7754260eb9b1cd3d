//! Concentration steps: iteratively re-select the h observations closest to
//! the current fit until the covariance determinant stops shrinking.
//!
//! Three interchangeable execution strategies produce identical results:
//!
//! * [`Strategy::Full`] — recompute moments from scratch, distances through
//!   an explicit inverse (the baseline).
//! * [`Strategy::Cholesky`] — recompute moments, distances by forward
//!   substitution against a Cholesky factor.
//! * [`Strategy::Update`] — maintain the sum-of-squares matrix Λ, its
//!   inverse, and its log-determinant incrementally through rank-one
//!   updates; a two-element swap refreshes the inverse and determinant by
//!   the Sherman–Morrison identity instead of refactorizing.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{dot, CholFactor, DataMatrix, SymMatrix};
use crate::refine::RefinedFit;
use crate::stats::consistency_factor;

/// How a C-step computes distances and maintains subset moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Full,
    Cholesky,
    Update,
}

/// Rank-one updates accumulate round-off; the update strategy refactorizes
/// Λ⁻¹ and the determinant from scratch after this many accepted C-steps.
const REFACTOR_INTERVAL: usize = 32;

/// Moments of the current h-subset.
#[derive(Debug, Clone)]
pub struct HSubsetState {
    pub members: Vec<bool>,
    pub center: Vec<f64>,
    /// Λ = Σ_{i∈H} (z_i − μ)(z_i − μ)ᵀ = (h−1)·Σ̂.
    pub sscp: SymMatrix,
    /// Maintained only on the update path.
    pub inv_sscp: Option<SymMatrix>,
    pub log_det_sscp: f64,
    pub h: usize,
    accepted_steps: usize,
}

/// Outcome of a converged (or capped) concentration run.
#[derive(Debug, Clone)]
pub struct CandidateResult {
    pub center: Vec<f64>,
    /// Consistency-scaled scatter c(α)·Λ/(h−1).
    pub scatter: SymMatrix,
    /// log det of the *pre-scaling* scatter Λ/(h−1).
    pub log_det: f64,
    pub members: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
}

/// Robust distances d_i = ‖L⁻¹(z_i − μ)‖ via one Cholesky factorization and
/// n forward substitutions.
pub fn robust_distances(
    z: &DataMatrix,
    center: &[f64],
    scatter: &SymMatrix,
) -> Result<Vec<f64>> {
    let factor = scatter.cholesky()?;
    Ok(distances_with_factor(z, center, &factor))
}

fn distances_with_factor(z: &DataMatrix, center: &[f64], factor: &CholFactor) -> Vec<f64> {
    let p = z.cols();
    (0..z.rows())
        .into_par_iter()
        .with_min_len(2048)
        .map(|i| {
            let row = z.row(i);
            let mut y = vec![0.0; p];
            for j in 0..p {
                y[j] = row[j] - center[j];
            }
            factor.forward_solve_in_place(&mut y);
            dot(&y, &y).sqrt()
        })
        .collect()
}

/// Squared distances through an explicit inverse (the baseline variant).
fn sq_distances_with_inverse(z: &DataMatrix, center: &[f64], inv: &SymMatrix) -> Vec<f64> {
    let p = z.cols();
    (0..z.rows())
        .into_par_iter()
        .with_min_len(2048)
        .map(|i| {
            let row = z.row(i);
            let mut d = vec![0.0; p];
            for j in 0..p {
                d[j] = row[j] - center[j];
            }
            inv.quad_form(&d)
        })
        .collect()
}

/// Membership vector of the h smallest distances; ties at the boundary break
/// by observation index, so the selection is deterministic.
pub fn select_h_smallest(distances: &[f64], h: usize) -> Vec<bool> {
    let n = distances.len();
    debug_assert!(h >= 1 && h <= n);
    let mut idx: Vec<u32> = (0..n as u32).collect();
    let cmp = |a: &u32, b: &u32| {
        distances[*a as usize]
            .partial_cmp(&distances[*b as usize])
            .unwrap()
            .then(a.cmp(b))
    };
    if h < n {
        idx.select_nth_unstable_by(h - 1, cmp);
    }
    let mut members = vec![false; n];
    for &i in &idx[..h] {
        members[i as usize] = true;
    }
    members
}

/// Builds subset moments directly from the member rows.
pub fn compute_state(z: &DataMatrix, members: Vec<bool>, strategy: Strategy) -> Result<HSubsetState> {
    let p = z.cols();
    let h = members.iter().filter(|&&m| m).count();
    if h <= p {
        return Err(Error::InvalidInput(format!(
            "subset size {h} must exceed dimension {p}"
        )));
    }
    let mut center = vec![0.0; p];
    for (i, &m) in members.iter().enumerate() {
        if m {
            let row = z.row(i);
            for j in 0..p {
                center[j] += row[j];
            }
        }
    }
    for c in &mut center {
        *c /= h as f64;
    }
    let mut sscp = SymMatrix::zeros(p);
    let mut d = vec![0.0; p];
    for (i, &m) in members.iter().enumerate() {
        if m {
            let row = z.row(i);
            for j in 0..p {
                d[j] = row[j] - center[j];
            }
            sscp.rank_one_update(1.0, &d);
        }
    }
    let factor = sscp.cholesky().map_err(|_| Error::SingularCandidate)?;
    let log_det_sscp = factor.log_det();
    let inv_sscp = if strategy == Strategy::Update {
        Some(sscp.inverse(&factor))
    } else {
        None
    };
    Ok(HSubsetState {
        members,
        center,
        sscp,
        inv_sscp,
        log_det_sscp,
        h,
        accepted_steps: 0,
    })
}

impl HSubsetState {
    /// 1-norm condition number of Λ (identical to that of Σ̂ = Λ/(h−1)).
    fn condition(&self) -> Result<f64> {
        let inv_norm = match &self.inv_sscp {
            Some(inv) => inv.norm_1(),
            None => {
                let factor = self.sscp.cholesky().map_err(|_| Error::SingularCandidate)?;
                self.sscp.inverse(&factor).norm_1()
            }
        };
        Ok(self.sscp.norm_1() * inv_norm)
    }

    fn refactorize(&mut self) -> Result<()> {
        let factor = self.sscp.cholesky().map_err(|_| Error::SingularCandidate)?;
        self.log_det_sscp = factor.log_det();
        self.inv_sscp = Some(self.sscp.inverse(&factor));
        self.accepted_steps = 0;
        Ok(())
    }

    /// Applies one observation's entry (δ = +1) or exit (δ = −1) to the
    /// running moments. Returns the rank-one coefficient k and direction u
    /// so the caller can mirror the update on Λ⁻¹.
    fn apply_delta(&mut self, row: &[f64], delta: f64) -> (f64, Vec<f64>) {
        let p = row.len();
        let mut u = vec![0.0; p];
        for j in 0..p {
            u[j] = row[j] - self.center[j];
        }
        let h_new = (self.h as f64) + delta;
        self.h = h_new as usize;
        let step = delta / h_new;
        for j in 0..p {
            self.center[j] += step * u[j];
        }
        // Λ_new = Λ + δ·u·vᵀ with v = u(1 − δ/h_new), a symmetric rank-one
        // update with coefficient k = δ − 1/h_new (since δ² = 1).
        let k = delta - 1.0 / h_new;
        self.sscp.rank_one_update(k, &u);
        (k, u)
    }
}

/// One concentration step: select the h nearest observations under the
/// current fit and refresh the subset moments per the chosen strategy.
pub fn cstep_once(z: &DataMatrix, state: &HSubsetState, strategy: Strategy) -> Result<HSubsetState> {
    let h = state.h;
    let hm1 = (h - 1) as f64;

    let new_members = match strategy {
        Strategy::Full => {
            let scatter = state.sscp.scale(1.0 / hm1);
            let factor = scatter.cholesky().map_err(|_| Error::SingularCandidate)?;
            let inv = scatter.inverse(&factor);
            let d2 = sq_distances_with_inverse(z, &state.center, &inv);
            select_h_smallest(&d2, h)
        }
        Strategy::Cholesky => {
            let scatter = state.sscp.scale(1.0 / hm1);
            let factor = scatter.cholesky().map_err(|_| Error::SingularCandidate)?;
            let d = distances_with_factor(z, &state.center, &factor);
            select_h_smallest(&d, h)
        }
        Strategy::Update => {
            let inv = state
                .inv_sscp
                .as_ref()
                .expect("update strategy maintains the inverse");
            // d² = (h−1)·(z−μ)ᵀΛ⁻¹(z−μ); the scale factor is monotone, so
            // selection can use the Λ⁻¹ quadratic form directly.
            let d2 = sq_distances_with_inverse(z, &state.center, inv);
            select_h_smallest(&d2, h)
        }
    };

    if new_members == state.members {
        return Ok(state.clone());
    }

    match strategy {
        Strategy::Full | Strategy::Cholesky => compute_state(z, new_members, strategy),
        Strategy::Update => apply_membership_update(z, state, new_members),
    }
}

/// Transforms an update-path state to a new membership through the δ-loop:
/// each leaver (δ = −1) and joiner (δ = +1) contributes a rank-one update
/// to the center and Λ. Leavers are processed before joiners, so the subset
/// never grows beyond its target size. A two-element swap also refreshes
/// Λ⁻¹ and log det Λ by the Sherman–Morrison identity; larger membership
/// changes refactorize instead.
pub fn apply_membership_update(
    z: &DataMatrix,
    state: &HSubsetState,
    new_members: Vec<bool>,
) -> Result<HSubsetState> {
    let mut next = state.clone();
    let leavers: Vec<usize> = (0..z.rows())
        .filter(|&i| state.members[i] && !new_members[i])
        .collect();
    let joiners: Vec<usize> = (0..z.rows())
        .filter(|&i| !state.members[i] && new_members[i])
        .collect();
    if leavers.is_empty() && joiners.is_empty() {
        return Ok(next);
    }
    // If no observation survives from the old subset the running center is
    // meaningless mid-loop; build the new moments directly instead.
    if leavers.len() == state.h {
        return compute_state(z, new_members, Strategy::Update);
    }
    let two_swap = leavers.len() + joiners.len() == 2 && state.inv_sscp.is_some();

    for (&i, delta) in leavers
        .iter()
        .map(|i| (i, -1.0))
        .chain(joiners.iter().map(|i| (i, 1.0)))
    {
        let (k, u) = next.apply_delta(z.row(i), delta);
        if two_swap {
            let inv = next.inv_sscp.as_mut().expect("inverse present");
            let w = inv.mul_vec(&u);
            let denom = 1.0 + k * dot(&u, &w);
            if denom <= 1e-12 {
                return Err(Error::SingularCandidate);
            }
            inv.rank_one_update(-k / denom, &w);
            next.log_det_sscp += denom.ln();
        }
    }
    next.members = new_members;
    next.accepted_steps += 1;
    if !two_swap || next.accepted_steps >= REFACTOR_INTERVAL {
        next.refactorize()?;
    }
    Ok(next)
}

/// Runs C-steps from a refined start until the membership stabilizes, then
/// applies the coverage consistency factor.
///
/// The fit is abandoned with [`Error::SingularCandidate`] whenever the
/// candidate scatter's 1-norm condition number reaches `kappa_max`.
pub fn converge(
    z: &DataMatrix,
    start: &RefinedFit,
    h: usize,
    kappa_max: f64,
    strategy: Strategy,
    max_iter: usize,
) -> Result<CandidateResult> {
    let (n, p) = (z.rows(), z.cols());
    if h <= p || h > n {
        return Err(Error::InvalidInput(format!(
            "subset size {h} outside ({p}..{n}]"
        )));
    }
    let d0 = robust_distances(z, &start.center, &start.scatter)
        .map_err(|_| Error::SingularCandidate)?;
    let members = select_h_smallest(&d0, h);
    let mut state = compute_state(z, members, strategy)?;

    let mut iterations = 0usize;
    let mut converged = false;
    loop {
        if state.condition()? >= kappa_max {
            return Err(Error::SingularCandidate);
        }
        if iterations >= max_iter {
            break;
        }
        let prev_log_det = state.log_det_sscp;
        let next = cstep_once(z, &state, strategy)?;
        iterations += 1;
        if next.members == state.members {
            converged = true;
            state = next;
            break;
        }
        let rel_change =
            (next.log_det_sscp - prev_log_det).abs() / prev_log_det.abs().max(1.0);
        state = next;
        if rel_change < 1e-12 {
            converged = true;
            break;
        }
    }
    if state.condition()? >= kappa_max {
        return Err(Error::SingularCandidate);
    }

    let hm1 = (h - 1) as f64;
    let alpha = h as f64 / n as f64;
    let scatter = state.sscp.scale(consistency_factor(alpha, p) / hm1);
    let log_det = state.log_det_sscp - p as f64 * hm1.ln();
    Ok(CandidateResult {
        center: state.center,
        scatter,
        log_det,
        members: state.members,
        iterations,
        converged,
    })
}
