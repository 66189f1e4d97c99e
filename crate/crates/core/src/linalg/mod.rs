//! Dense linear algebra: matrices, SVD, subspaces, seeded randomness.

mod matrix;
mod rng;
mod solve;
mod subspace;
mod svd;

pub use matrix::Matrix;
pub(crate) use matrix::dot;
pub use rng::Rng;
pub use solve::{inverse, solve};
pub use subspace::{
    max_principal_angle, nullspace, numerical_rank, orth, principal_angles, DEFAULT_RANK_TOL,
};
pub use svd::{singular_values, svd, SvdResult, MAX_SWEEPS, OFF_DIAGONAL_TOL};

use crate::error::{LabError, Result};

/// Modified Gram–Schmidt with one reorthogonalization pass. The implied `R`
/// has a positive diagonal. Fails on rank-deficient input.
pub fn orthonormalize(a: &Matrix) -> Result<Matrix> {
    let (m, n) = a.shape();
    if n > m {
        return Err(LabError::Dimension(format!(
            "cannot orthonormalize {n} columns in dimension {m}"
        )));
    }
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = a.column(j);
        let original = dot(&v, &v).sqrt();
        for _ in 0..2 {
            for prev in &q {
                let p = dot(&v, prev);
                for (x, y) in v.iter_mut().zip(prev) {
                    *x -= p * y;
                }
            }
        }
        let nrm = dot(&v, &v).sqrt();
        if nrm <= 1e-12 * original.max(f64::MIN_POSITIVE) {
            return Err(LabError::Singular(format!("column {j} is dependent")));
        }
        v.iter_mut().for_each(|x| *x /= nrm);
        q.push(v);
    }
    let mut out = Matrix::zeros(m, n);
    for (j, col) in q.iter().enumerate() {
        out.set_column(j, col);
    }
    Ok(out)
}

/// `eps · Q` with `Q` a Haar-like random orthogonal `n x n` matrix.
pub fn random_scaled_orthogonal(n: usize, eps: f64, rng: &mut Rng) -> Matrix {
    loop {
        let g = rng.gaussian_matrix(n, n, 1.0);
        if let Ok(q) = orthonormalize(&g) {
            return q.scale(eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_orthogonal_has_flat_spectrum() {
        let mut rng = Rng::new(1);
        let w = random_scaled_orthogonal(7, 0.5, &mut rng);
        let s = singular_values(&w).unwrap();
        for x in s {
            assert!((x - 0.5).abs() < 1e-13);
        }
    }

    #[test]
    fn orthonormalize_keeps_span() {
        let mut rng = Rng::new(8);
        let a = rng.gaussian_matrix(5, 3, 1.0);
        let q = orthonormalize(&a).unwrap();
        assert!(q.orthonormality_residual() < 1e-14);
        assert!(max_principal_angle(&q, &orth(&a, 1e-12).unwrap()).unwrap() < 1e-12);
        // R = QᵀA is upper triangular with positive diagonal
        let r = q.t_matmul(&a);
        for i in 0..3 {
            assert!(r[(i, i)] > 0.0);
            for j in 0..i {
                assert!(r[(i, j)].abs() < 1e-12);
            }
        }
    }
}
