//! Small dense linear algebra for the limited-memory machinery.
//!
//! Everything here operates on matrices of a few dozen rows at most: the
//! compact-representation factors of an L-BFGS store and the explicit
//! matrices used by tests and benchmark instrumentation. No attempt is made
//! at blocking or cache efficiency.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Relative symmetry tolerance applied by symmetric consumers.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative pivot threshold below which a linear system is declared singular.
pub const SINGULAR_TOL: f64 = 1e-12;
/// Maximum number of cyclic Jacobi sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (max |a_ij - a_ji| = {0:e})")]
    Asymmetric(f64),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("linear system is singular to working precision")]
    Singular,
    #[error("curvature pair {index} has non-positive inner product {inner:e}")]
    Curvature { index: usize, inner: f64 },
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Shape {
                expected: format!("{} entries", rows * cols),
                got: format!("{} entries", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinalgError::Shape {
                    expected: format!("{cols} columns"),
                    got: format!("{} columns", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    /// Builds an `n x columns.len()` matrix whose columns are the given vectors.
    pub fn from_columns(n: usize, columns: &[&[f64]]) -> Result<Self, LinalgError> {
        let mut m = Self::zeros(n, columns.len());
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(LinalgError::Shape {
                    expected: format!("column of length {n}"),
                    got: format!("length {}", col.len()),
                });
            }
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Shape {
                expected: format!("{} rows", self.cols),
                got: format!("{} rows", other.rows),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::Shape {
                expected: format!("vector of length {}", self.cols),
                got: format!("length {}", v.len()),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute asymmetry `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Replaces the matrix with `(A + A^T) / 2`.
    pub fn symmetrize(&mut self) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }

    fn check_symmetric(&self) -> Result<(), LinalgError> {
        if self.rows != self.cols {
            return Err(LinalgError::NotSquare { rows: self.rows, cols: self.cols });
        }
        if !self.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let asym = self.asymmetry();
        if asym > SYMMETRY_TOL * self.max_abs() {
            return Err(LinalgError::Asymmetric(asym));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Householder QR returning the economy factors `A = Q R`.
///
/// For an `m x c` input, `Q` is `m x k` with orthonormal columns and `R` is
/// `k x c` upper trapezoidal, where `k = min(m, c)`. When `m >= c` this is the
/// usual thin factorization. Rank-deficient inputs are fine; the affected
/// diagonal entries of `R` come out (near) zero.
pub fn thin_qr(a: &Matrix) -> Result<(Matrix, Matrix), LinalgError> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let (m, c) = (a.rows, a.cols);
    let k = m.min(c);
    let mut r = a.clone();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(k);

    for j in 0..k {
        let x: Vec<f64> = (j..m).map(|i| r[(i, j)]).collect();
        let xnorm = norm(&x);
        if xnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm = norm(&v);
        if vnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        for vi in &mut v {
            *vi /= vnorm;
        }
        for col in j..c {
            let proj: f64 = (j..m).map(|i| v[i - j] * r[(i, col)]).sum();
            for i in j..m {
                r[(i, col)] -= 2.0 * v[i - j] * proj;
            }
        }
        for i in (j + 1)..m {
            r[(i, j)] = 0.0;
        }
        reflectors.push(Some(v));
    }

    let mut q = Matrix::zeros(m, k);
    for i in 0..k {
        q[(i, i)] = 1.0;
    }
    for (j, refl) in reflectors.iter().enumerate().rev() {
        let Some(v) = refl else { continue };
        for col in 0..k {
            let proj: f64 = (j..m).map(|i| v[i - j] * q[(i, col)]).sum();
            for i in j..m {
                q[(i, col)] -= 2.0 * v[i - j] * proj;
            }
        }
    }

    let mut r_top = Matrix::zeros(k, c);
    for i in 0..k {
        for jj in i..c {
            r_top[(i, jj)] = r[(i, jj)];
        }
    }
    Ok((q, r_top))
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order together with the matching
/// orthonormal eigenvectors as the columns of the second matrix.
pub fn sym_eig(a: &Matrix) -> Result<(Vec<f64>, Matrix), LinalgError> {
    a.check_symmetric()?;
    let n = a.rows;
    let mut w = a.clone();
    w.symmetrize();
    let mut v = Matrix::identity(n);
    let scale = w.frobenius_norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| w[(i, j)] * w[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * 1e-2 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (w[(q, q)] - w[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = cs * wkp - sn * wkq;
                    w[(k, q)] = sn * wkp + cs * wkq;
                }
                for k in 0..n {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = cs * wpk - sn * wqk;
                    w[(q, k)] = sn * wpk + cs * wqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = cs * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + cs * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].total_cmp(&w[(i, i)]));
    let values = order.iter().map(|&i| w[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok((values, vectors))
}

/// All eigenvalues of a small symmetric matrix, descending.
pub fn sym_eig_small(a: &Matrix) -> Result<Vec<f64>, LinalgError> {
    sym_eig(a).map(|(values, _)| values)
}

/// Solves `A X = B` by LU factorization with partial pivoting.
///
/// A pivot smaller than [`SINGULAR_TOL`] times the largest entry of `A`
/// is reported as [`LinalgError::Singular`].
pub fn lu_solve(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    let n = a.rows;
    if a.cols != n {
        return Err(LinalgError::NotSquare { rows: a.rows, cols: a.cols });
    }
    if b.rows != n {
        return Err(LinalgError::Shape { expected: format!("{n} right-hand-side rows"), got: format!("{}", b.rows) });
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let threshold = SINGULAR_TOL * a.max_abs();
    let mut lu = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let pivot_row = (col..n).max_by(|&i, &j| lu[(i, col)].abs().total_cmp(&lu[(j, col)].abs())).unwrap_or(col);
        let pivot = lu[(pivot_row, col)];
        if pivot.abs() <= threshold || pivot == 0.0 {
            return Err(LinalgError::Singular);
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = lu[(col, j)];
                lu[(col, j)] = lu[(pivot_row, j)];
                lu[(pivot_row, j)] = tmp;
            }
            for j in 0..x.cols {
                let tmp = x[(col, j)];
                x[(col, j)] = x[(pivot_row, j)];
                x[(pivot_row, j)] = tmp;
            }
        }
        for i in (col + 1)..n {
            let factor = lu[(i, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                lu[(i, j)] -= factor * lu[(col, j)];
            }
            for j in 0..x.cols {
                x[(i, j)] -= factor * x[(col, j)];
            }
        }
    }
    for j in 0..x.cols {
        for i in (0..n).rev() {
            let mut acc = x[(i, j)];
            for k in (i + 1)..n {
                acc -= lu[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = acc / lu[(i, i)];
        }
    }
    Ok(x)
}

/// In-place BFGS update `B <- B - (B s)(B s)^T / (s^T B s) + y y^T / (y^T s)`.
pub fn bfgs_update(b: &mut Matrix, s: &[f64], y: &[f64]) -> Result<(), LinalgError> {
    let n = b.rows;
    if s.len() != n || y.len() != n {
        return Err(LinalgError::Shape {
            expected: format!("vectors of length {n}"),
            got: format!("{} / {}", s.len(), y.len()),
        });
    }
    let ys = dot(y, s);
    if ys <= 0.0 {
        return Err(LinalgError::Curvature { index: 0, inner: ys });
    }
    let bs = b.matvec(s)?;
    let sbs = dot(s, &bs);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] += -bs[i] * bs[j] / sbs + y[i] * y[j] / ys;
        }
    }
    Ok(())
}

/// Explicit L-BFGS matrix built by applying the BFGS update pair by pair to
/// `B0 = c I`. Used as a reference for the implicit machinery.
pub fn dense_bfgs_oracle(n: usize, s: &[Vec<f64>], y: &[Vec<f64>], c: f64) -> Result<Matrix, LinalgError> {
    if s.len() != y.len() {
        return Err(LinalgError::Shape { expected: format!("{} y vectors", s.len()), got: format!("{}", y.len()) });
    }
    let mut b = Matrix::identity(n);
    for i in 0..n {
        b[(i, i)] = c;
    }
    for (index, (si, yi)) in s.iter().zip(y).enumerate() {
        bfgs_update(&mut b, si, yi).map_err(|e| match e {
            LinalgError::Curvature { inner, .. } => LinalgError::Curvature { index, inner },
            other => other,
        })?;
    }
    b.symmetrize();
    Ok(b)
}

/// Largest-magnitude eigenvalue of a symmetric matrix by power iteration.
pub fn power_iteration_norm(a: &Matrix, iterations: usize) -> f64 {
    let n = a.rows;
    if n == 0 {
        return 0.0;
    }
    // Deterministic, generic starting vector.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i as f64 + 1.0).sqrt()).collect();
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = a.matvec(&v).expect("square matrix");
        let wn = norm(&w);
        if wn == 0.0 {
            return 0.0;
        }
        estimate = wn / norm(&v);
        v = w.into_iter().map(|x| x / wn).collect();
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn qr_of_identity_is_identity_up_to_signs() {
        let (q, r) = thin_qr(&Matrix::identity(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(approx(q[(i, j)].abs(), expected, 1e-15));
                assert!(approx(r[(i, j)].abs(), expected, 1e-15));
            }
        }
    }

    #[test]
    fn qr_rank_deficient_columns() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let (q, r) = thin_qr(&a).unwrap();
        assert!(r[(1, 1)].abs() < 1e-15);
        let qr = q.matmul(&r).unwrap();
        assert!(qr.sub(&a).frobenius_norm() < 1e-14);
    }

    #[test]
    fn qr_rejects_nan() {
        let a = Matrix::from_rows(&[vec![1.0, f64::NAN]]).unwrap();
        assert_eq!(thin_qr(&a), Err(LinalgError::NonFinite));
    }

    #[test]
    fn qr_wide_matrix_is_economy() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 7.0]]).unwrap();
        let (q, r) = thin_qr(&a).unwrap();
        assert_eq!((q.rows(), q.cols()), (2, 2));
        assert_eq!((r.rows(), r.cols()), (2, 3));
        assert!(q.matmul(&r).unwrap().sub(&a).frobenius_norm() < 1e-13);
    }

    #[test]
    fn eig_diagonal() {
        let vals = sym_eig_small(&Matrix::diag(&[1.0, 3.0, -2.0])).unwrap();
        assert_eq!(vals, vec![3.0, 1.0, -2.0]);
    }

    #[test]
    fn eig_swap_matrix() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let vals = sym_eig_small(&a).unwrap();
        assert!(approx(vals[0], 1.0, 1e-14) && approx(vals[1], -1.0, 1e-14));
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.0]]).unwrap();
        assert!(matches!(sym_eig_small(&a), Err(LinalgError::Asymmetric(_))));
    }

    #[test]
    fn lu_detects_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(lu_solve(&a, &Matrix::identity(2)), Err(LinalgError::Singular));
    }

    #[test]
    fn lu_solves_with_pivoting() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0], vec![5.0]]).unwrap();
        let x = lu_solve(&a, &b).unwrap();
        assert!(approx(x[(0, 0)], 1.0, 1e-15) && approx(x[(1, 0)], 3.0, 1e-15));
    }

    #[test]
    fn dense_oracle_empty_is_scaled_identity() {
        let b = dense_bfgs_oracle(2, &[], &[], 1.0).unwrap();
        assert_eq!(b, Matrix::identity(2));
    }

    #[test]
    fn dense_oracle_single_pair_by_hand() {
        let b = dense_bfgs_oracle(2, &[vec![1.0, 0.0]], &[vec![2.0, 0.0]], 1.0).unwrap();
        assert_eq!(b, Matrix::diag(&[2.0, 1.0]));
    }

    #[test]
    fn dense_oracle_rejects_bad_curvature() {
        let err = dense_bfgs_oracle(2, &[vec![1.0, 0.0]], &[vec![-1.0, 0.0]], 1.0).unwrap_err();
        assert!(matches!(err, LinalgError::Curvature { index: 0, .. }));
    }

    #[test]
    fn power_iteration_finds_spectral_norm() {
        let a = Matrix::diag(&[1.0, -5.0, 2.0]);
        assert!(approx(power_iteration_norm(&a, 500), 5.0, 1e-9));
    }
}
