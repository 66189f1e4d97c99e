//! Proximal maps of the nuclear norm and of its square.

use crate::error::{LabError, Result};
use crate::linalg::{svd, Matrix};

pub fn nuclear_norm(m: &Matrix) -> Result<f64> {
    Ok(svd(m)?.s.iter().sum())
}

/// `½‖M − Φ‖_F² + λ‖M‖_*`.
pub fn nuclear_objective(m: &Matrix, phi: &Matrix, lam: f64) -> Result<f64> {
    Ok(0.5 * (m - phi).frobenius_norm_sq() + lam * nuclear_norm(m)?)
}

/// Singular-value soft thresholding `U (S − λ)₊ Vᵀ`.
pub fn nuclear_prox(phi: &Matrix, lam: f64) -> Result<Matrix> {
    if !(lam >= 0.0) {
        return Err(LabError::InvalidArgument(format!("threshold must be non-negative, got {lam}")));
    }
    if lam == 0.0 {
        return Ok(phi.clone());
    }
    let mut s = svd(phi)?;
    for x in &mut s.s {
        *x = (*x - lam).max(0.0);
    }
    Ok(s.reconstruct())
}

/// `‖Y − Z‖_F² + c‖Z‖_*²`.
pub fn squared_nuclear_objective(z: &Matrix, y: &Matrix, c: f64) -> Result<f64> {
    let n = nuclear_norm(z)?;
    Ok((y - z).frobenius_norm_sq() + c * n * n)
}

/// Minimizer of `Σ(s_i − z_i)² + c(Σz_i)²` over `z ≥ 0` for descending `s`.
///
/// With `k` active coordinates, stationarity gives `z_i = s_i − c·T` where
/// `T = Σ_{i≤k} z_i = Σ_{i≤k} s_i / (1 + c k)`. The active set is the largest
/// `k` with `s_k > c·T_k`.
pub fn squared_nuclear_shrink(s: &[f64], c: f64) -> Vec<f64> {
    let mut prefix = 0.0;
    let mut total = 0.0;
    for (i, &si) in s.iter().enumerate() {
        prefix += si;
        let t = prefix / (1.0 + c * (i + 1) as f64);
        if si > c * t {
            total = t;
        }
    }
    s.iter().map(|&si| (si - c * total).max(0.0)).collect()
}

/// `argmin_Z ‖Y − Z‖_F² + c‖Z‖_*²`, sharing singular vectors with `Y`.
pub fn squared_nuclear_prox(y: &Matrix, c: f64) -> Result<Matrix> {
    if !(c >= 0.0) {
        return Err(LabError::InvalidArgument(format!("weight must be non-negative, got {c}")));
    }
    if c == 0.0 {
        return Ok(y.clone());
    }
    let mut s = svd(y)?;
    s.s = squared_nuclear_shrink(&s.s, c);
    Ok(s.reconstruct())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;

    #[test]
    fn soft_threshold_examples() {
        let phi = Matrix::diag(&[3.0, 1.0]);
        assert_eq!(nuclear_prox(&phi, 0.0).unwrap(), phi);
        assert_eq!(nuclear_prox(&phi, 2.0).unwrap(), Matrix::diag(&[1.0, 0.0]));
        assert_eq!(nuclear_prox(&phi, 5.0).unwrap().max_abs(), 0.0);
        assert!(nuclear_prox(&phi, -1.0).is_err());
    }

    #[test]
    fn soft_threshold_beats_perturbations() {
        let mut rng = Rng::new(1);
        let phi = rng.gaussian_matrix(4, 3, 1.0);
        let m = nuclear_prox(&phi, 0.7).unwrap();
        let best = nuclear_objective(&m, &phi, 0.7).unwrap();
        for _ in 0..1000 {
            let p = &m + &rng.gaussian_matrix(4, 3, 1e-2);
            assert!(nuclear_objective(&p, &phi, 0.7).unwrap() >= best - 1e-12);
        }
    }

    #[test]
    fn squared_examples() {
        let y = Matrix::diag(&[2.0, 0.0]);
        assert_eq!(squared_nuclear_prox(&y, 0.0).unwrap(), y);
        let z = squared_nuclear_prox(&y, 1.0).unwrap();
        assert!((&z - &Matrix::diag(&[1.0, 0.0])).max_abs() < 1e-15);
        // s = (1, 1), c = 10: both active, T = 2/21, z = 1 − 20/21
        let z = squared_nuclear_shrink(&[1.0, 1.0], 10.0);
        assert!((z[0] - 1.0 / 21.0).abs() < 1e-15 && (z[1] - 1.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn shrink_is_stationary() {
        // KKT: active coordinates satisfy s_i − z_i = c Σz, inactive ones s_i ≤ c Σz.
        let s = [3.0, 2.5, 0.4, 0.1];
        for c in [0.05, 0.3, 1.0, 4.0] {
            let z = squared_nuclear_shrink(&s, c);
            let total: f64 = z.iter().sum();
            for (si, zi) in s.iter().zip(&z) {
                if *zi > 0.0 {
                    assert!((si - zi - c * total).abs() < 1e-12);
                } else {
                    assert!(*si <= c * total + 1e-12);
                }
            }
        }
    }
}
