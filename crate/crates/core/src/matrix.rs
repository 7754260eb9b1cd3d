//! Dense symmetric linear algebra for small dimensions (p ≤ 40).
//!
//! Everything here is exact-arithmetic simple: full row-major storage,
//! classical Cholesky, cyclic Jacobi eigendecomposition. At these sizes the
//! cost is negligible next to the data passes, and the simplicity buys
//! bit-reproducibility across platforms.

use crate::error::{Error, Result};

/// A symmetric p×p matrix in full row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for j in 0..dim {
            m.data[j * dim + j] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (j, &v) in values.iter().enumerate() {
            m.data[j * values.len() + j] = v;
        }
        m
    }

    /// Builds from a full row-major buffer, symmetrizing round-off:
    /// entries (i,j) and (j,i) are averaged.
    pub fn from_raw(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim);
        let mut m = SymMatrix { dim, data };
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (m.data[i * dim + j] + m.data[j * dim + i]);
                m.data[i * dim + j] = avg;
                m.data[j * dim + i] = avg;
            }
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            assert_eq!(r.len(), dim);
            data.extend_from_slice(r);
        }
        Self::from_raw(dim, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets the (i,j) and (j,i) entries together.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scale(&self, t: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|x| x * t).collect(),
        }
    }

    /// self + k·uuᵀ, the symmetric rank-one update.
    pub fn rank_one_update(&mut self, k: f64, u: &[f64]) {
        debug_assert_eq!(u.len(), self.dim);
        for i in 0..self.dim {
            let ku = k * u[i];
            for j in 0..self.dim {
                self.data[i * self.dim + j] += ku * u[j];
            }
        }
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for i in 0..self.dim {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            out[i] = dot(row, v);
        }
        out
    }

    /// Quadratic form vᵀ·self·v.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(&self.mul_vec(v), v)
    }

    /// Maximum absolute column sum (equals row sum by symmetry).
    pub fn norm_1(&self) -> f64 {
        (0..self.dim)
            .map(|i| {
                self.data[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .map(|x| x.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn cholesky(&self) -> Result<CholFactor> {
        cholesky(self)
    }

    pub fn sym_eigen(&self) -> Result<EigenPair> {
        sym_eigen(self)
    }

    /// S^(1/2) or S^(−1/2) via the eigendecomposition.
    pub fn sym_power(&self, exponent: f64) -> Result<SymMatrix> {
        let eig = self.sym_eigen()?;
        if eig.values[self.dim - 1] <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let powered: Vec<f64> = eig.values.iter().map(|&l| l.powf(exponent)).collect();
        Ok(eig.reassemble(&powered))
    }

    /// Inverse computed column-by-column from the Cholesky factor.
    pub fn inverse(&self, factor: &CholFactor) -> SymMatrix {
        let p = self.dim;
        let mut inv = vec![0.0; p * p];
        let mut e = vec![0.0; p];
        for j in 0..p {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let col = factor.solve(&e);
            for i in 0..p {
                inv[i * p + j] = col[i];
            }
        }
        SymMatrix::from_raw(p, inv)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor L with S = L·Lᵀ.
#[derive(Debug, Clone)]
pub struct CholFactor {
    dim: usize,
    /// Row-major; entries above the diagonal are zero.
    lower: Vec<f64>,
}

/// Factors a symmetric positive definite matrix.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot falls at or below
/// `1e-12 ×` the largest diagonal entry, which is how degenerate scatter
/// candidates announce themselves throughout the pipeline.
pub fn cholesky(s: &SymMatrix) -> Result<CholFactor> {
    let p = s.dim;
    let max_diag = (0..p).map(|j| s.get(j, j)).fold(0.0_f64, f64::max);
    let tol = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = s.get(i, j);
            for k in 0..j {
                sum -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if sum <= tol {
                    return Err(Error::NotPositiveDefinite);
                }
                l[i * p + i] = sum.sqrt();
            } else {
                l[i * p + j] = sum / l[j * p + j];
            }
        }
    }
    Ok(CholFactor { dim: p, lower: l })
}

impl CholFactor {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// Solves L·y = v by forward substitution.
    pub fn forward_solve(&self, v: &[f64]) -> Vec<f64> {
        let mut y = v.to_vec();
        self.forward_solve_in_place(&mut y);
        y
    }

    pub fn forward_solve_in_place(&self, y: &mut [f64]) {
        let p = self.dim;
        debug_assert_eq!(y.len(), p);
        for i in 0..p {
            let mut sum = y[i];
            for k in 0..i {
                sum -= self.lower[i * p + k] * y[k];
            }
            y[i] = sum / self.lower[i * p + i];
        }
    }

    /// Solves Lᵀ·x = y by back substitution.
    pub fn backward_solve_in_place(&self, x: &mut [f64]) {
        let p = self.dim;
        debug_assert_eq!(x.len(), p);
        for i in (0..p).rev() {
            let mut sum = x[i];
            for k in (i + 1)..p {
                sum -= self.lower[k * p + i] * x[k];
            }
            x[i] = sum / self.lower[i * p + i];
        }
    }

    /// Solves S·x = v with S = L·Lᵀ.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let mut x = v.to_vec();
        self.forward_solve_in_place(&mut x);
        self.backward_solve_in_place(&mut x);
        x
    }

    /// log det S = 2·Σ log L_jj, staying in log space to dodge under/overflow.
    pub fn log_det(&self) -> f64 {
        let p = self.dim;
        2.0 * (0..p).map(|j| self.lower[j * p + j].ln()).sum::<f64>()
    }
}

/// Exact 1-norm condition number ‖S‖₁·‖S⁻¹‖₁ from an existing factor.
///
/// At p ≤ 40 the explicit inverse is cheap; a norm estimator would only be
/// an optimization.
pub fn condition_1norm(s: &SymMatrix, factor: &CholFactor) -> f64 {
    s.norm_1() * s.inverse(factor).norm_1()
}

/// Eigendecomposition of a symmetric matrix: columns of `vectors` are the
/// eigenvectors, `values` sorted non-increasing.
#[derive(Debug, Clone)]
pub struct EigenPair {
    dim: usize,
    /// Row-major p×p; column k is the eigenvector for values[k].
    vectors: Vec<f64>,
    pub values: Vec<f64>,
}

impl EigenPair {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn vector_entry(&self, row: usize, col: usize) -> f64 {
        self.vectors[row * self.dim + col]
    }

    /// V·diag(values)·Vᵀ with replacement eigenvalues.
    pub fn reassemble(&self, values: &[f64]) -> SymMatrix {
        let p = self.dim;
        debug_assert_eq!(values.len(), p);
        let mut out = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..=i {
                let mut sum = 0.0;
                for k in 0..p {
                    sum += self.vectors[i * p + k] * values[k] * self.vectors[j * p + k];
                }
                out[i * p + j] = sum;
                out[j * p + i] = sum;
            }
        }
        SymMatrix { dim: p, data: out }
    }

    /// Vᵀ·x — coordinates of x in the eigenbasis.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let p = self.dim;
        let mut out = vec![0.0; p];
        for k in 0..p {
            let mut sum = 0.0;
            for i in 0..p {
                sum += self.vectors[i * p + k] * x[i];
            }
            out[k] = sum;
        }
        out
    }

    /// V·x — back from eigenbasis coordinates.
    pub fn unproject(&self, x: &[f64]) -> Vec<f64> {
        let p = self.dim;
        let mut out = vec![0.0; p];
        for i in 0..p {
            out[i] = dot(&self.vectors[i * p..(i + 1) * p], x);
        }
        out
    }
}

/// Cyclic Jacobi with an off-diagonal tolerance of 1e-12 × Frobenius norm and
/// a cap of 100 sweeps. Orthogonality of the accumulated rotations is exact by
/// construction.
pub fn sym_eigen(s: &SymMatrix) -> Result<EigenPair> {
    let p = s.dim;
    let mut a = s.data.clone();
    let mut v = vec![0.0; p * p];
    for i in 0..p {
        v[i * p + i] = 1.0;
    }
    let tol = 1e-12 * s.frobenius().max(f64::MIN_POSITIVE);

    let off = |a: &[f64]| -> f64 {
        let mut sum = 0.0;
        for i in 0..p {
            for j in (i + 1)..p {
                sum += a[i * p + j] * a[i * p + j];
            }
        }
        (2.0 * sum).sqrt()
    };

    let mut converged = p == 1;
    for _sweep in 0..100 {
        if off(&a) <= tol {
            converged = true;
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                let aij = a[i * p + j];
                if aij.abs() <= tol / (p as f64) {
                    continue;
                }
                // Classical Jacobi rotation annihilating a_ij.
                let theta = (a[j * p + j] - a[i * p + i]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sgn = t * c;
                for k in 0..p {
                    let aik = a[i * p + k];
                    let ajk = a[j * p + k];
                    a[i * p + k] = c * aik - sgn * ajk;
                    a[j * p + k] = sgn * aik + c * ajk;
                }
                for k in 0..p {
                    let aki = a[k * p + i];
                    let akj = a[k * p + j];
                    a[k * p + i] = c * aki - sgn * akj;
                    a[k * p + j] = sgn * aki + c * akj;
                }
                for k in 0..p {
                    let vki = v[k * p + i];
                    let vkj = v[k * p + j];
                    v[k * p + i] = c * vki - sgn * vkj;
                    v[k * p + j] = sgn * vki + c * vkj;
                }
            }
        }
    }
    if !converged && off(&a) > tol {
        return Err(Error::ConvergenceFailure);
    }

    // Sort eigenvalues descending, carrying columns of V along.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| a[y * p + y].partial_cmp(&a[x * p + x]).unwrap());
    let values: Vec<f64> = order.iter().map(|&k| a[k * p + k]).collect();
    let mut vectors = vec![0.0; p * p];
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..p {
            vectors[row * p + new_col] = v[row * p + old_col];
        }
    }
    Ok(EigenPair {
        dim: p,
        vectors,
        values,
    })
}

/// An n×p data matrix, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape mismatch");
        DataMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DataMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Returns the row index of the first non-finite entry, if any.
    pub fn first_invalid_row(&self) -> Option<usize> {
        for i in 0..self.rows {
            if self.row(i).iter().any(|x| !x.is_finite()) {
                return Some(i);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn cholesky_identity() {
        let s = SymMatrix::identity(3);
        let l = cholesky(&s).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_close(l.get(i, j), if i == j { 1.0 } else { 0.0 }, 1e-15);
            }
        }
    }

    #[test]
    fn cholesky_diagonal() {
        let l = cholesky(&SymMatrix::diag(&[4.0, 9.0])).unwrap();
        assert_close(l.get(0, 0), 2.0, 1e-15);
        assert_close(l.get(1, 1), 3.0, 1e-15);
    }

    #[test]
    fn cholesky_indefinite_rejected() {
        let s = SymMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(cholesky(&s), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn forward_solve_cases() {
        let l = cholesky(&SymMatrix::identity(2)).unwrap();
        assert_eq!(l.forward_solve(&[1.0, 2.0]), vec![1.0, 2.0]);
        let l = cholesky(&SymMatrix::diag(&[4.0, 9.0])).unwrap();
        assert_eq!(l.forward_solve(&[4.0, 9.0]), vec![2.0, 3.0]);
        // L = [[1,0],[1,1]] factors S = [[1,1],[1,2]].
        let l = cholesky(&SymMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 2.0]])).unwrap();
        let y = l.forward_solve(&[1.0, 3.0]);
        assert_close(y[0], 1.0, 1e-14);
        assert_close(y[1], 2.0, 1e-14);
    }

    #[test]
    fn log_det_cases() {
        assert_close(cholesky(&SymMatrix::identity(4)).unwrap().log_det(), 0.0, 1e-15);
        assert_close(
            cholesky(&SymMatrix::diag(&[4.0, 9.0])).unwrap().log_det(),
            36.0_f64.ln(),
            1e-12,
        );
        assert_close(
            cholesky(&SymMatrix::diag(&[1e-12, 1e-12])).unwrap().log_det(),
            4.0 * 1e-6_f64.ln(),
            1e-9,
        );
    }

    #[test]
    fn eigen_textbook_2x2() {
        let s = SymMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let e = sym_eigen(&s).unwrap();
        assert_close(e.values[0], 3.0, 1e-12);
        assert_close(e.values[1], 1.0, 1e-12);
        let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
        assert_close(e.vector_entry(0, 0).abs(), inv_sqrt2, 1e-12);
        assert_close(e.vector_entry(1, 0).abs(), inv_sqrt2, 1e-12);
    }

    #[test]
    fn eigen_identity() {
        let e = sym_eigen(&SymMatrix::identity(5)).unwrap();
        for v in &e.values {
            assert_close(*v, 1.0, 1e-14);
        }
    }

    #[test]
    fn sym_power_cases() {
        let half = SymMatrix::diag(&[4.0, 9.0]).sym_power(0.5).unwrap();
        assert_close(half.get(0, 0), 2.0, 1e-12);
        assert_close(half.get(1, 1), 3.0, 1e-12);
        assert_close(half.get(0, 1), 0.0, 1e-12);
        let inv_half = SymMatrix::identity(3).sym_power(-0.5).unwrap();
        for i in 0..3 {
            assert_close(inv_half.get(i, i), 1.0, 1e-12);
        }
        let d = SymMatrix::diag(&[4.0]).sym_power(-0.5).unwrap();
        assert_close(d.get(0, 0), 0.5, 1e-12);
    }

    #[test]
    fn condition_number_cases() {
        let s = SymMatrix::identity(3);
        let l = cholesky(&s).unwrap();
        assert_close(condition_1norm(&s, &l), 1.0, 1e-12);
        let s = SymMatrix::diag(&[1000.0, 1.0]);
        let l = cholesky(&s).unwrap();
        assert_close(condition_1norm(&s, &l), 1000.0, 1e-9);
        let s = SymMatrix::diag(&[1.0, 1e-4]);
        let l = cholesky(&s).unwrap();
        assert_close(condition_1norm(&s, &l), 1e4, 1e-6);
    }

    #[test]
    fn rank_one_update_matches_rebuild() {
        let mut s = SymMatrix::from_rows(&[&[2.0, 0.5], &[0.5, 3.0]]);
        let u = [1.0, -2.0];
        s.rank_one_update(0.5, &u);
        assert_close(s.get(0, 0), 2.5, 1e-14);
        assert_close(s.get(0, 1), 0.5 - 1.0, 1e-14);
        assert_close(s.get(1, 1), 5.0, 1e-14);
    }
}
