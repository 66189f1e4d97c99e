//! One-sided (Hestenes) Jacobi SVD.
//!
//! Column pairs of the working copy are rotated until every pair is orthogonal
//! to `m·ε` relative precision. Sweeps are cyclic in `(p, q)` row-major order
//! and capped at [`MAX_SWEEPS`]. Wide inputs are handled through the transpose.

use super::matrix::dot;
use super::Matrix;
use crate::error::{LabError, Result};

pub const MAX_SWEEPS: usize = 60;

/// Acceptance level for the final off-diagonal Gram residual, relative to `σ₁²`.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `m x k` with orthonormal columns.
    pub u: Matrix,
    /// `k = min(m, n)` singular values, descending.
    pub s: Vec<f64>,
    /// `n x k` with orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for j in 0..self.s.len() {
            for i in 0..us.rows() {
                us[(i, j)] *= self.s[j];
            }
        }
        us.matmul_t(&self.v)
    }

    pub fn sigma_max(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    /// Leading `r` left singular vectors.
    pub fn top_left(&self, r: usize) -> Matrix {
        self.u.column_range(0, r)
    }

    pub fn top_right(&self, r: usize) -> Matrix {
        self.v.column_range(0, r)
    }

    pub fn bottom_left(&self, r: usize) -> Matrix {
        let k = self.s.len();
        self.u.column_range(k - r, k)
    }

    pub fn bottom_right(&self, r: usize) -> Matrix {
        let k = self.s.len();
        self.v.column_range(k - r, k)
    }
}

/// Thin SVD `a = U diag(s) Vᵀ`.
///
/// Sign convention: in each left singular vector the entry of largest
/// magnitude (lowest row index on ties) is non-negative; the matching right
/// vector is flipped with it. Equal singular values keep the column order in
/// which the Jacobi iteration left them.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    a.ensure_finite("svd input")?;
    if a.rows() == 0 || a.cols() == 0 {
        return Err(LabError::Dimension("svd of an empty matrix".into()));
    }
    let (mut u, s, mut v) = if a.rows() >= a.cols() {
        jacobi_tall(a)?
    } else {
        let (left, s, right) = jacobi_tall(&a.transpose())?;
        (right, s, left)
    };
    for j in 0..s.len() {
        let mut best = 0;
        let mut best_abs = -1.0;
        for i in 0..u.rows() {
            let x = u[(i, j)].abs();
            if x > best_abs {
                best_abs = x;
                best = i;
            }
        }
        if u[(best, j)] < 0.0 {
            for i in 0..u.rows() {
                u[(i, j)] = -u[(i, j)];
            }
            for i in 0..v.rows() {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
    Ok(SvdResult { u, s, v })
}

pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(a)?.s)
}

/// Jacobi on a matrix with `rows >= cols`. Returns `(U, s, V)` sorted descending.
fn jacobi_tall(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = (m.max(1) as f64) * f64::EPSILON;

    let mut converged = false;
    let mut off_max = 0.0f64;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        off_max = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                off_max = off_max.max(gamma.abs());
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let sigma1 = norms.iter().cloned().fold(0.0, f64::max);
    if !converged && off_max > OFF_DIAGONAL_TOL * sigma1 * sigma1 {
        return Err(LabError::NoConvergence {
            sweeps: MAX_SWEEPS,
            residual: off_max,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal values keep their column order
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut u = Matrix::zeros(m, n);
    let mut v = Matrix::zeros(n, n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        if norms[j] > 1e-300 {
            let inv = 1.0 / norms[j];
            let unit: Vec<f64> = cols[j].iter().map(|x| x * inv).collect();
            u.set_column(k, &unit);
        } else {
            missing.push(k);
        }
        v.set_column(k, &vcols[j]);
    }
    if !missing.is_empty() {
        complete_basis(&mut u, &missing);
    }
    Ok((u, s, v))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the columns listed in `missing` with unit vectors orthogonal to all
/// other columns, drawn from the standard basis by Gram–Schmidt.
fn complete_basis(u: &mut Matrix, missing: &[usize]) {
    let m = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|j| !missing.contains(j)).collect();
    for &target in missing {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            for _ in 0..2 {
                for &j in &filled {
                    let col = u.column(j);
                    let proj = dot(&cand, &col);
                    for (c, x) in cand.iter_mut().zip(&col) {
                        *c -= proj * x;
                    }
                }
            }
            let nrm = dot(&cand, &cand).sqrt();
            if best.as_ref().map_or(true, |(b, _)| nrm > *b + 1e-12) {
                best = Some((nrm, cand));
            }
        }
        let (nrm, cand) = best.expect("at least one basis vector");
        let unit: Vec<f64> = cand.iter().map(|x| x / nrm).collect();
        u.set_column(target, &unit);
        filled.push(target);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;

    fn check_invariants(a: &Matrix, r: &SvdResult) {
        let k = a.rows().min(a.cols());
        assert_eq!(r.s.len(), k);
        assert_eq!(r.u.shape(), (a.rows(), k));
        assert_eq!(r.v.shape(), (a.cols(), k));
        for w in r.s.windows(2) {
            assert!(w[0] >= w[1] && w[1] >= 0.0);
        }
        assert!(r.u.orthonormality_residual() <= 1e-10);
        assert!(r.v.orthonormality_residual() <= 1e-10);
        let err = (&r.reconstruct() - a).max_abs();
        assert!(err <= 1e-9 * (1.0 + r.s[0]), "reconstruction error {err}");
    }

    #[test]
    fn identity_and_diagonal() {
        let i3 = Matrix::identity(3);
        let r = svd(&i3).unwrap();
        assert_eq!(r.s, vec![1.0, 1.0, 1.0]);
        assert_eq!(r.u, i3);
        assert_eq!(r.v, i3);

        let d = Matrix::diag(&[3.0, 1.0]);
        let r = svd(&d).unwrap();
        assert_eq!(r.s, vec![3.0, 1.0]);

        let d = Matrix::diag(&[1.0, -3.0]);
        let r = svd(&d).unwrap();
        assert_eq!(r.s, vec![3.0, 1.0]);
        check_invariants(&d, &r);
    }

    #[test]
    fn random_rectangular_reconstructs() {
        let mut rng = Rng::new(5);
        for &(m, n) in &[(5, 4), (4, 5), (1, 6), (6, 1), (7, 7), (32, 17)] {
            let a = rng.uniform_matrix(m, n, -10.0, 10.0);
            let r = svd(&a).unwrap();
            check_invariants(&a, &r);
        }
    }

    #[test]
    fn rank_deficient_and_zero() {
        let z = Matrix::zeros(3, 2);
        let r = svd(&z).unwrap();
        assert_eq!(r.s, vec![0.0, 0.0]);
        check_invariants(&z, &r);

        let mut rng = Rng::new(9);
        let b = rng.gaussian_matrix(6, 2, 1.0).matmul(&rng.gaussian_matrix(2, 5, 1.0));
        let r = svd(&b).unwrap();
        check_invariants(&b, &r);
        assert!(r.s[2] < 1e-12 * r.s[0]);
    }

    #[test]
    fn sign_convention_holds() {
        let mut rng = Rng::new(21);
        let a = rng.gaussian_matrix(6, 4, 1.0);
        let r = svd(&a).unwrap();
        for j in 0..4 {
            let col = r.u.column(j);
            let (imax, _) = col
                .iter()
                .enumerate()
                .fold((0, -1.0), |(bi, bv), (i, &x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
            assert!(col[imax] >= 0.0);
        }
        // deterministic
        let again = svd(&a).unwrap();
        assert_eq!(r.u, again.u);
        assert_eq!(r.s, again.s);
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = Matrix::identity(2);
        a[(0, 1)] = f64::INFINITY;
        assert!(svd(&a).is_err());
    }
}
