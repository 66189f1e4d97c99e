//! Implicit bias of gradient descent on underdetermined least squares.
//!
//! Every gradient `Xᵀ(Xw − y)` lies in the row span of `X`, so the iterates
//! only move inside `w₀ + rowspan(X)`. The limit is the interpolant closest to
//! `w₀`: `(I − X⁺X) w₀ + Xᵀ(XXᵀ)⁻¹ y`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{dot, numerical_rank, solve, svd, Matrix, DEFAULT_RANK_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresReport {
    /// Largest `‖(I − P)(w_t − w₀)‖` over all iterates, `P` the row-span projector.
    pub max_confinement_residual: f64,
    pub final_iterate: Vec<f64>,
    /// `(I − P) w₀ + Xᵀ(XXᵀ)⁻¹ y`.
    pub predicted_limit: Vec<f64>,
    pub limit_gap: f64,
    /// Drift of the component of `w₀` outside the row span.
    pub max_null_drift: f64,
    pub final_loss: f64,
    pub steps: usize,
}

fn matvec(a: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..a.rows()).map(|i| dot(a.row(i), x)).collect()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Runs `w ← w − η Xᵀ(Xw − y)` and checks confinement at every iterate.
pub fn least_squares_bias_check(x: &Matrix, y: &[f64], w0: &[f64], eta: f64, steps: usize) -> Result<LeastSquaresReport> {
    let (n, d) = x.shape();
    if n >= d || y.len() != n || w0.len() != d {
        return Err(LabError::Dimension(format!(
            "need a wide X (n < d) with matching y and w0, got X {n}x{d}, y {}, w0 {}",
            y.len(),
            w0.len()
        )));
    }
    if numerical_rank(x, DEFAULT_RANK_TOL)? < n {
        return Err(LabError::Singular("X must have full row rank".into()));
    }
    let sigma = svd(x)?.sigma_max();
    if !(eta > 0.0 && eta < 2.0 / (sigma * sigma)) {
        return Err(LabError::InvalidArgument(format!(
            "step {eta} must lie in (0, {})",
            2.0 / (sigma * sigma)
        )));
    }
    // P = Xᵀ(XXᵀ)⁻¹X
    let gram = x.matmul_t(x);
    let projector = x.t_matmul(&solve(&gram, x)?);
    let project_out = |v: &[f64]| -> Vec<f64> {
        let p = matvec(&projector, v);
        v.iter().zip(&p).map(|(a, b)| a - b).collect()
    };
    let min_norm = x.t_matmul(&solve(&gram, &Matrix::column_vector(y))?).column(0);
    let null0 = project_out(w0);
    let predicted_limit: Vec<f64> = null0.iter().zip(&min_norm).map(|(a, b)| a + b).collect();

    let mut w = w0.to_vec();
    let mut max_confinement_residual = 0.0f64;
    let mut max_null_drift = 0.0f64;
    for _ in 0..steps {
        let r: Vec<f64> = matvec(x, &w).iter().zip(y).map(|(a, b)| a - b).collect();
        for j in 0..d {
            let g: f64 = (0..n).map(|i| x[(i, j)] * r[i]).sum();
            w[j] -= eta * g;
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(LabError::NonFinite("least-squares iterate"));
        }
        let delta: Vec<f64> = w.iter().zip(w0).map(|(a, b)| a - b).collect();
        max_confinement_residual = max_confinement_residual.max(norm(&project_out(&delta)));
        let drift: Vec<f64> = project_out(&w).iter().zip(&null0).map(|(a, b)| a - b).collect();
        max_null_drift = max_null_drift.max(norm(&drift));
    }
    let r: Vec<f64> = matvec(x, &w).iter().zip(y).map(|(a, b)| a - b).collect();
    let gap: Vec<f64> = w.iter().zip(&predicted_limit).map(|(a, b)| a - b).collect();
    Ok(LeastSquaresReport {
        max_confinement_residual,
        limit_gap: norm(&gap),
        final_iterate: w,
        predicted_limit,
        max_null_drift,
        final_loss: 0.5 * dot(&r, &r),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;

    #[test]
    fn zero_data_stays_zero() {
        let mut rng = Rng::new(1);
        let x = rng.gaussian_matrix(2, 5, 1.0);
        let rep = least_squares_bias_check(&x, &[0.0, 0.0], &[0.0; 5], 0.05, 100).unwrap();
        assert!(rep.final_iterate.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn converges_to_min_norm() {
        let mut rng = Rng::new(2);
        let x = rng.gaussian_matrix(2, 5, 1.0);
        let y = [1.0, -0.5];
        let s = svd(&x).unwrap().sigma_max();
        let rep = least_squares_bias_check(&x, &y, &[0.0; 5], 1.0 / (s * s), 20_000).unwrap();
        assert!(rep.max_confinement_residual <= 1e-10);
        assert!(rep.limit_gap <= 1e-6, "{}", rep.limit_gap);
    }

    #[test]
    fn null_component_is_preserved() {
        // X = [e1ᵀ; e2ᵀ]; w0 = e3 lies outside the row span
        let x = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let rep = least_squares_bias_check(&x, &[2.0, 3.0], &[0.0, 0.0, 1.5], 0.5, 200).unwrap();
        assert_eq!(rep.final_iterate[2], 1.5);
        assert_eq!(rep.max_null_drift, 0.0);
        assert!((rep.final_iterate[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_rank_deficient_and_large_steps() {
        let x = Matrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]]).unwrap();
        assert!(least_squares_bias_check(&x, &[1.0, 2.0], &[0.0; 3], 0.01, 1).is_err());
        let x = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert!(least_squares_bias_check(&x, &[1.0, 2.0], &[0.0; 3], 2.5, 1).is_err());
    }
}
