//! Subspace utilities built on the SVD: principal angles, ranges, nullspaces.

use super::svd::svd;
use super::Matrix;
use crate::error::{LabError, Result};

/// Default relative cutoff for [`numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-6;

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Principal angles (radians, ascending) between the column spans of two
/// matrices with orthonormal columns and the same number of rows.
///
/// Small angles come from the sines, `σ((I - U₁U₁ᵀ)U₂)`, since `acos` near 1
/// loses about half the available digits. Angles past π/4 come from the
/// cosines `σ(U₁ᵀU₂)`.
pub fn principal_angles(u1: &Matrix, u2: &Matrix) -> Result<Vec<f64>> {
    if u1.rows() != u2.rows() {
        return Err(LabError::Dimension(format!(
            "principal angles need equal row counts, got {} and {}",
            u1.rows(),
            u2.rows()
        )));
    }
    for (name, u) in [("first", u1), ("second", u2)] {
        let res = u.orthonormality_residual();
        if u.cols() > 0 && res > ORTHONORMAL_TOL {
            return Err(LabError::InvalidArgument(format!(
                "{name} basis is not orthonormal (residual {res:e})"
            )));
        }
    }
    let (wide, narrow) = if u1.cols() >= u2.cols() { (u1, u2) } else { (u2, u1) };
    let k = narrow.cols();
    if k == 0 {
        return Ok(Vec::new());
    }
    let cosines = svd(&wide.t_matmul(narrow))?.s;
    let residual = narrow - &wide.matmul(&wide.t_matmul(narrow));
    let mut sines = svd(&residual)?.s;
    sines.truncate(k);
    sines.reverse();

    let quarter = std::f64::consts::FRAC_PI_4;
    Ok((0..k)
        .map(|i| {
            let from_sin = sines[i].clamp(0.0, 1.0).asin();
            if from_sin < quarter {
                from_sin
            } else {
                cosines[i].clamp(0.0, 1.0).acos()
            }
        })
        .collect())
}

/// Largest principal angle, or zero for empty bases.
pub fn max_principal_angle(u1: &Matrix, u2: &Matrix) -> Result<f64> {
    Ok(principal_angles(u1, u2)?.into_iter().fold(0.0, f64::max))
}

/// Number of singular values above `rel_tol · σ₁`.
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> Result<usize> {
    let s = svd(a)?.s;
    let cutoff = rel_tol * s[0];
    Ok(s.iter().filter(|&&x| x > cutoff).count())
}

/// Orthonormal basis of the range, keeping directions with `σ > rel_tol · σ₁`.
pub fn orth(a: &Matrix, rel_tol: f64) -> Result<Matrix> {
    let r = svd(a)?;
    let cutoff = rel_tol * r.sigma_max();
    let keep = r.s.iter().filter(|&&x| x > cutoff).count();
    Ok(r.u.column_range(0, keep))
}

/// Orthonormal basis of `{x : a x ≈ 0}`: right singular directions with
/// `σ ≤ rel_tol · σ₁`. The zero matrix gives the identity. A full-column-rank
/// input gives an `n x 0` matrix.
pub fn nullspace(a: &Matrix, rel_tol: f64) -> Result<Matrix> {
    let (m, n) = a.shape();
    let padded;
    let a = if m < n {
        padded = a.vstack(&Matrix::zeros(n - m, n));
        &padded
    } else {
        a
    };
    let r = svd(a)?;
    let sigma1 = r.sigma_max();
    if sigma1 == 0.0 {
        return Ok(Matrix::identity(n));
    }
    let idx: Vec<usize> = (0..n).filter(|&j| r.s[j] <= rel_tol * sigma1).collect();
    Ok(r.v.select_columns(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormalize, Rng};

    #[test]
    fn planes_at_known_angle() {
        let theta: f64 = 0.3;
        let u1 = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let u2 = Matrix::from_rows(&[vec![theta.cos()], vec![theta.sin()]]).unwrap();
        let a = principal_angles(&u1, &u2).unwrap();
        assert!((a[0] - theta).abs() < 1e-15);

        let theta: f64 = 1.2;
        let u2 = Matrix::from_rows(&[vec![theta.cos()], vec![theta.sin()]]).unwrap();
        let a = principal_angles(&u1, &u2).unwrap();
        assert!((a[0] - theta).abs() < 1e-14);
    }

    #[test]
    fn tiny_angles_are_resolved() {
        let theta: f64 = 1e-10;
        let u1 = Matrix::from_rows(&[vec![1.0], vec![0.0], vec![0.0]]).unwrap();
        let u2 = Matrix::from_rows(&[vec![theta.cos()], vec![theta.sin()], vec![0.0]]).unwrap();
        let a = principal_angles(&u1, &u2).unwrap();
        assert!((a[0] - theta).abs() < 1e-20);
    }

    #[test]
    fn symmetric_and_rejects_non_orthonormal() {
        let mut rng = Rng::new(4);
        let u1 = orthonormalize(&rng.gaussian_matrix(8, 3, 1.0)).unwrap();
        let u2 = orthonormalize(&rng.gaussian_matrix(8, 2, 1.0)).unwrap();
        let a = principal_angles(&u1, &u2).unwrap();
        let b = principal_angles(&u2, &u1).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(principal_angles(&u1, &u1.scale(2.0)).is_err());
    }

    #[test]
    fn rank_plus_nullity() {
        let mut rng = Rng::new(13);
        let a = rng.gaussian_matrix(4, 3, 1.0).matmul(&rng.gaussian_matrix(3, 7, 1.0));
        let rank = numerical_rank(&a, DEFAULT_RANK_TOL).unwrap();
        let null = nullspace(&a, 1e-10).unwrap();
        assert_eq!(rank, 3);
        assert_eq!(rank + null.cols(), 7);
        assert!(a.matmul(&null).max_abs() < 1e-10);
        assert!(null.orthonormality_residual() < 1e-12);

        let full = Matrix::identity(3);
        assert_eq!(nullspace(&full, 1e-10).unwrap().cols(), 0);
        assert_eq!(nullspace(&Matrix::zeros(2, 3), 1e-10).unwrap(), Matrix::identity(3));
    }

    #[test]
    fn orth_spans_range() {
        let mut rng = Rng::new(17);
        let a = rng.gaussian_matrix(6, 2, 1.0).matmul(&rng.gaussian_matrix(2, 4, 1.0));
        let q = orth(&a, 1e-10).unwrap();
        assert_eq!(q.cols(), 2);
        let proj = &a - &q.matmul(&q.t_matmul(&a));
        assert!(proj.max_abs() < 1e-12);
    }
}
