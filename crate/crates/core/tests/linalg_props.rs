mod common;

use common::*;
use proptest::prelude::*;
use qsass::linalg::{dense_bfgs_oracle, dot, norm, sym_eig, sym_eig_small, thin_qr, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Roots of `x^2 - tr x + det`, descending.
fn quadratic_roots(a: &Matrix) -> Vec<f64> {
    let tr = a[(0, 0)] + a[(1, 1)];
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    vec![0.5 * (tr + disc), 0.5 * (tr - disc)]
}

/// Roots of the characteristic cubic by the trigonometric method, descending.
fn cubic_roots(a: &Matrix) -> Vec<f64> {
    let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
    let q = (a[(0, 0)] + a[(1, 1)] + a[(2, 2)]) / 3.0;
    let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p == 0.0 {
        return vec![q; 3];
    }
    let mut b = a.clone();
    for i in 0..3 {
        b[(i, i)] -= q;
    }
    let det = b[(0, 0)] * (b[(1, 1)] * b[(2, 2)] - b[(1, 2)] * b[(2, 1)])
        - b[(0, 1)] * (b[(1, 0)] * b[(2, 2)] - b[(1, 2)] * b[(2, 0)])
        + b[(0, 2)] * (b[(1, 0)] * b[(2, 1)] - b[(1, 1)] * b[(2, 0)]);
    let r = (det / (2.0 * p * p * p)).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    vec![e1, 3.0 * q - e1 - e3, e3]
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let m = gaussian_matrix(rng, n, n);
    let mut a = m.clone();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    a
}

#[test]
fn thin_qr_reconstructs_200_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..200 {
        let rows = rng.random_range(1..=20);
        let cols = rng.random_range(1..=10);
        let mut a = gaussian_matrix(&mut rng, rows, cols);
        if trial % 3 == 0 && cols >= 2 {
            // rank deficiency: a repeated column, a combination and a zero column
            for i in 0..rows {
                a[(i, cols - 1)] = a[(i, 0)];
            }
            if cols >= 3 {
                for i in 0..rows {
                    a[(i, 1)] = 2.0 * a[(i, 0)] - a[(i, cols - 1)];
                }
            }
            if cols >= 4 {
                for i in 0..rows {
                    a[(i, 2)] = 0.0;
                }
            }
        }
        let (q, r) = thin_qr(&a).unwrap();
        let k = rows.min(cols);
        assert_eq!((q.rows(), q.cols(), r.rows(), r.cols()), (rows, k, k, cols));
        let back = q.matmul(&r).unwrap();
        assert!(back.sub(&a).max_abs() <= 1e-10 * a.max_abs().max(1.0), "trial {trial}");
        let gram = q.transpose().matmul(&q).unwrap();
        assert!(gram.sub(&Matrix::identity(k)).max_abs() <= 1e-12, "trial {trial}");
        for i in 0..k {
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn small_eigenvalues_match_characteristic_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let a = random_symmetric(&mut rng, 2);
        let got = sym_eig_small(&a).unwrap();
        for (g, e) in got.iter().zip(quadratic_roots(&a)) {
            assert!((g - e).abs() <= 1e-8);
        }
        let b = random_symmetric(&mut rng, 3);
        let got = sym_eig_small(&b).unwrap();
        for (g, e) in got.iter().zip(cubic_roots(&b)) {
            assert!((g - e).abs() <= 1e-8, "{got:?}");
        }
    }
}

#[test]
fn jacobi_matches_reference_decomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let n = rng.random_range(1..=12);
        let a = random_symmetric(&mut rng, n);
        let (values, vectors) = sym_eig(&a).unwrap();
        let mut expected = reference_eigenvalues(&a);
        expected.reverse();
        for (g, e) in values.iter().zip(&expected) {
            assert!((g - e).abs() <= 1e-10 * a.max_abs().max(1.0));
        }
        for (j, lambda) in values.iter().enumerate() {
            let v = vectors.column(j);
            let av = a.matvec(&v).unwrap();
            let resid: Vec<f64> = av.iter().zip(&v).map(|(x, y)| x - lambda * y).collect();
            assert!(norm(&resid) <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dense_oracle_satisfies_last_secant(seed in any::<u64>(), n in 1usize..12, m in 1usize..6, c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = spd_matrix(&mut rng, n, 0.1);
        let s: Vec<Vec<f64>> = (0..m).map(|_| gaussian_vec(&mut rng, n)).collect();
        let y: Vec<Vec<f64>> = s.iter().map(|si| a.matvec(si).unwrap()).collect();
        let b = dense_bfgs_oracle(n, &s, &y, c).unwrap();
        let bs = b.matvec(&s[m - 1]).unwrap();
        let err: Vec<f64> = bs.iter().zip(&y[m - 1]).map(|(p, q)| p - q).collect();
        prop_assert!(norm(&err) <= 1e-9 * norm(&y[m - 1]).max(1.0));
        prop_assert!(dot(&s[m - 1], &y[m - 1]) > 0.0);
    }
}
