use lowrank_lab::linalg::{
    max_principal_angle, nullspace, numerical_rank, orth, orthonormalize, principal_angles, svd, Matrix, Rng,
};
use proptest::prelude::*;

fn matrix(max_dim: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_dim, 1..=max_dim, any::<u64>(), 0usize..3).prop_map(|(m, n, seed, shape)| {
        let mut rng = Rng::new(seed);
        match shape {
            0 => rng.gaussian_matrix(m, n, 1.0),
            1 => rng.uniform_matrix(m, n, -100.0, 100.0),
            _ => {
                // rank-deficient
                let k = 1 + (seed as usize) % m.min(n);
                rng.gaussian_matrix(m, k, 1.0).matmul(&rng.gaussian_matrix(k, n, 1.0))
            }
        }
    })
}

fn basis(d: usize, k: usize, seed: u64) -> Matrix {
    orthonormalize(&Rng::new(seed).gaussian_matrix(d, k, 1.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn svd_invariants(a in matrix(32)) {
        let r = svd(&a).unwrap();
        let k = a.rows().min(a.cols());
        prop_assert_eq!(r.s.len(), k);
        for w in r.s.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!(r.s.iter().all(|&s| s >= 0.0));
        prop_assert!(r.u.orthonormality_residual() <= 1e-10);
        prop_assert!(r.v.orthonormality_residual() <= 1e-10);
        let err = (&r.reconstruct() - &a).max_abs();
        prop_assert!(err <= 1e-10 * (1.0 + r.sigma_max()), "reconstruction error {}", err);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn principal_angles_are_symmetric(d in 2usize..12, k1 in 1usize..6, k2 in 1usize..6, seed in any::<u64>()) {
        let (k1, k2) = (k1.min(d), k2.min(d));
        let a = basis(d, k1, seed);
        let b = basis(d, k2, seed.wrapping_add(1));
        let ab = principal_angles(&a, &b).unwrap();
        let ba = principal_angles(&b, &a).unwrap();
        prop_assert_eq!(ab.len(), k1.min(k2));
        for (x, y) in ab.iter().zip(&ba) {
            prop_assert!((x - y).abs() <= 1e-10);
            prop_assert!(*x >= 0.0 && *x <= std::f64::consts::FRAC_PI_2 + 1e-12);
        }
        prop_assert!(max_principal_angle(&a, &a).unwrap() <= 1e-7);
    }

    #[test]
    fn rank_plus_nullity(a in matrix(12)) {
        let tol = 1e-9;
        let rank = numerical_rank(&a, tol).unwrap();
        let null = nullspace(&a, tol).unwrap();
        prop_assert_eq!(rank + null.cols(), a.cols());
        prop_assert_eq!(orth(&a, tol).unwrap().cols(), rank);
        if null.cols() > 0 {
            let scale = 1.0 + svd(&a).unwrap().sigma_max();
            prop_assert!(a.matmul(&null).max_abs() <= 1e-8 * scale);
            prop_assert!(null.orthonormality_residual() <= 1e-10);
        }
    }
}

#[test]
fn known_angles() {
    let e1 = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
    let diag = Matrix::from_rows(&[vec![1.0 / 2f64.sqrt()], vec![1.0 / 2f64.sqrt()]]).unwrap();
    let a = principal_angles(&e1, &diag).unwrap();
    assert!((a[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    let tiny = Matrix::from_rows(&[vec![1.0], vec![1e-10]]).unwrap();
    let a = principal_angles(&e1, &orthonormalize(&tiny).unwrap()).unwrap();
    assert!((a[0] - 1e-10).abs() < 1e-20);
}
