#![allow(dead_code)]

pub mod theory_alt;

use nalgebra::DMatrix;
use qsass::lbfgs::CurvaturePairStore;
use qsass::linalg::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_row_major(rows, cols, gaussian_vec(rng, rows * cols)).unwrap()
}

pub fn to_nalgebra(a: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

/// Ascending eigenvalues from nalgebra.
pub fn reference_eigenvalues(a: &Matrix) -> Vec<f64> {
    let mut v: Vec<f64> = to_nalgebra(a).symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Random SPD matrix `M M^T + shift I`.
pub fn spd_matrix(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Matrix {
    let m = gaussian_matrix(rng, n, n);
    let mut a = m.matmul(&m.transpose()).unwrap();
    for i in 0..n {
        a[(i, i)] += shift;
    }
    a.symmetrize();
    a
}

/// Store filled with `m` pairs `y = A s` for a random SPD `A`.
pub fn spd_store(rng: &mut ChaCha8Rng, n: usize, m: usize, c: f64) -> CurvaturePairStore {
    let a = spd_matrix(rng, n, 0.1);
    let mut store = CurvaturePairStore::new(n, Some(m), c, 1e-8).unwrap();
    while store.len() < m {
        let s = gaussian_vec(rng, n);
        let y = a.matvec(&s).unwrap();
        store.try_insert_pair(&s, &y).unwrap();
    }
    store
}

/// Store mixing extreme and ordinary curvature `y = lambda s + noise`.
pub fn adversarial_store(rng: &mut ChaCha8Rng, n: usize, m: usize, c: f64) -> CurvaturePairStore {
    let mut store = CurvaturePairStore::new(n, Some(m), c, 1e-8).unwrap();
    let scales = [1e-9, 1e-6, 1e-3, 1.0, 1e3, 1e6, 1e9];
    while store.len() < m {
        let s = gaussian_vec(rng, n);
        let lambda = scales[rng.random_range(0..scales.len())];
        let noise = gaussian_vec(rng, n);
        let y: Vec<f64> = s.iter().zip(&noise).map(|(si, ei)| lambda * si + 0.01 * lambda * ei).collect();
        store.try_insert_pair(&s, &y).unwrap();
    }
    store
}

pub fn dense_of(store: &CurvaturePairStore) -> Matrix {
    qsass::linalg::dense_bfgs_oracle(store.dim(), &store.s_vectors(), &store.y_vectors(), store.scale()).unwrap()
}
