#![allow(clippy::needless_range_loop)]

use dsvd_core::linalg::{cosine_similarity, frobenius_norm, matmul, svd, Matrix, SvdResult};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn naive_product(a: &Matrix, b: &Matrix) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; b.cols()]; a.rows()];
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            for p in 0..a.cols() {
                out[i][j] += a.get(i, p) * b.get(p, j);
            }
        }
    }
    out
}

/// Max deviation of the Gram matrix of the columns (or rows) from identity,
/// accumulated with explicit loops.
fn gram_deviation(m: &Matrix, columns: bool) -> f64 {
    let (n, len) = if columns { (m.cols(), m.rows()) } else { (m.rows(), m.cols()) };
    let at = |v: usize, i: usize| if columns { m.get(i, v) } else { m.get(v, i) };
    let mut worst = 0.0f64;
    for p in 0..n {
        for q in 0..n {
            let dot: f64 = (0..len).map(|i| at(p, i) * at(q, i)).sum();
            let target = if p == q { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

fn reconstruction_error(m: &Matrix, s: &SvdResult) -> f64 {
    let mut err = 0.0;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v: f64 = (0..s.sigma.len()).map(|p| s.u.get(i, p) * s.sigma[p] * s.vt.get(p, j)).sum();
            err += (v - m.get(i, j)).powi(2);
        }
    }
    err.sqrt()
}

fn assert_svd_contract(m: &Matrix) {
    let s = svd(m).unwrap();
    let r = m.rows().min(m.cols());
    assert_eq!(s.u.shape(), (m.rows(), r));
    assert_eq!(s.vt.shape(), (r, m.cols()));
    assert_eq!(s.sigma.len(), r);
    assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]), "sigma not sorted: {:?}", s.sigma);
    assert!(s.sigma.iter().all(|&v| v >= 0.0));
    let norm = frobenius_norm(m);
    assert!(reconstruction_error(m, &s) <= 1e-10 * norm.max(1e-12));
    assert!(gram_deviation(&s.u, true) <= 1e-10);
    assert!(gram_deviation(&s.vt, false) <= 1e-10);
}

#[test]
fn rank_one_matches_two_by_two_eigen_oracle() {
    let m = Matrix::from_rows(&[[3.0, 4.0], [6.0, 8.0]]);
    // Eigenvalues of M^T M from the characteristic polynomial.
    let (a, b, c) = (3.0 * 3.0 + 6.0 * 6.0, 3.0 * 4.0 + 6.0 * 8.0, 4.0 * 4.0 + 8.0 * 8.0);
    let trace: f64 = a + c;
    let det: f64 = a * c - b * b;
    let disc = (trace * trace / 4.0 - det).max(0.0).sqrt();
    let oracle = [(trace / 2.0 + disc).sqrt(), (trace / 2.0 - disc).max(0.0).sqrt()];
    let s = svd(&m).unwrap();
    assert!((s.sigma[0] - oracle[0]).abs() < 1e-10);
    assert!((s.sigma[0] - 11.180_339_887_498_949).abs() < 1e-10);
    assert!(s.sigma[1].abs() < 1e-10 && oracle[1] < 1e-6);
}

#[test]
fn fifty_random_eight_by_five() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        assert_svd_contract(&random_matrix(&mut rng, 8, 5));
    }
}

#[test]
fn rank_deficient_and_scaled_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for &(d, k, rank) in &[(12, 9, 3), (9, 12, 2), (30, 30, 1), (16, 4, 4)] {
        let a = random_matrix(&mut rng, d, rank);
        let b = random_matrix(&mut rng, rank, k);
        let m = matmul(&a, &b).unwrap();
        assert_svd_contract(&m);
        let s = svd(&m).unwrap();
        assert!(s.sigma[rank..].iter().all(|&v| v <= 1e-12 * s.sigma[0]));
    }
    for scale in [1e-150, 1e-8, 1e8, 1e150] {
        let m = random_matrix(&mut rng, 6, 7);
        let scaled = Matrix::from_vec(6, 7, m.as_slice().iter().map(|v| v * scale).collect()).unwrap();
        assert_svd_contract(&scaled);
    }
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_matrix(&mut rng, 7, 3);
    let b = random_matrix(&mut rng, 3, 5);
    let got = matmul(&a, &b).unwrap();
    let oracle = naive_product(&a, &b);
    for i in 0..7 {
        for j in 0..5 {
            assert!((got.get(i, j) - oracle[i][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn frobenius_and_cosine_match_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_matrix(&mut rng, 6, 9);
    let b = random_matrix(&mut rng, 6, 9);
    let mut sq = 0.0;
    let mut dot = 0.0;
    let mut sq_b = 0.0;
    for i in 0..6 {
        for j in 0..9 {
            sq += a.get(i, j) * a.get(i, j);
            sq_b += b.get(i, j) * b.get(i, j);
            dot += a.get(i, j) * b.get(i, j);
        }
    }
    assert!((frobenius_norm(&a) - sq.sqrt()).abs() < 1e-12);
    let cos = cosine_similarity(&a, &b).unwrap();
    assert!((cos - dot / (sq.sqrt() * sq_b.sqrt())).abs() < 1e-12);
}

#[test]
fn eckart_young_against_random_factor_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let m = random_matrix(&mut rng, 10, 8);
        let s = svd(&m).unwrap();
        for t in [1, 2, 4] {
            let truncated = s.reconstruct(t);
            let err = frobenius_norm(&truncated.sub(&m).unwrap());
            let tail: f64 = s.sigma[t..].iter().map(|v| v * v).sum();
            assert!((err * err - tail).abs() <= 1e-8 * tail);
            for _ in 0..200 {
                let a = random_matrix(&mut rng, 10, t);
                let b = random_matrix(&mut rng, t, 8);
                let other = frobenius_norm(&matmul(&a, &b).unwrap().sub(&m).unwrap());
                assert!(err <= other);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_invariants_hold(rows in 1usize..14, cols in 1usize..14, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, rows, cols);
        assert_svd_contract(&m);
    }

    #[test]
    fn svd_is_deterministic(rows in 1usize..10, cols in 1usize..10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, rows, cols);
        let (a, b) = (svd(&m).unwrap(), svd(&m.clone()).unwrap());
        prop_assert_eq!(a.sigma.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.sigma.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(a.u.as_slice(), b.u.as_slice());
        prop_assert_eq!(a.vt.as_slice(), b.vt.as_slice());
    }

    #[test]
    fn left_vectors_follow_sign_convention(rows in 1usize..10, cols in 1usize..10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = svd(&random_matrix(&mut rng, rows, cols)).unwrap();
        for p in 0..s.sigma.len() {
            let mut pivot = 0;
            for i in 0..rows {
                if s.u.get(i, p).abs() > s.u.get(pivot, p).abs() {
                    pivot = i;
                }
            }
            prop_assert!(s.u.get(pivot, p) >= 0.0);
        }
    }
}
