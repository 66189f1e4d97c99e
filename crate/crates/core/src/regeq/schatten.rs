//! Variational form of Schatten quasi-norms through depth-`L` factorizations.
//!
//! For `M = W_L⋯W_1`, the smallest `½Σ‖W_l‖_F²` equals `(L/2)·Σσ_i^{2/L}`,
//! reached by the balanced factorization in which every factor carries
//! `S^{1/L}`. By AM–GM, `½Σ_l a_l^2 ≥ (L/2)(∏ a_l)^{2/L}` for each singular
//! direction, with equality when the factors share the scale.

use crate::error::{LabError, Result};
use crate::linalg::{numerical_rank, solve, svd, Matrix, Rng};

use crate::network::product;

const RANK_TOL: f64 = 1e-12;

/// `Σ σ_i^p`.
pub fn schatten_power_sum(m: &Matrix, p: f64) -> Result<f64> {
    Ok(svd(m)?.s.iter().filter(|&&s| s > 0.0).map(|s| s.powf(p)).sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchattenValues {
    /// `½Σ‖W_l‖_F²` of the balanced factorization.
    pub balanced: f64,
    /// `(L/2) Σ σ_i^{2/L}`, the true minimum.
    pub closed_form: f64,
    /// `(2/L) Σ σ_i^{2/L}`; coincides with the minimum only at `L = 2`.
    pub two_over_depth_form: f64,
}

pub fn variational_schatten_value(m: &Matrix, depth: usize, d_inner: usize) -> Result<SchattenValues> {
    let factors = balanced_factorization(m, depth, d_inner)?;
    let p = 2.0 / depth as f64;
    let sum = schatten_power_sum(m, p)?;
    Ok(SchattenValues {
        balanced: half_sq_norms(&factors),
        closed_form: depth as f64 / 2.0 * sum,
        two_over_depth_form: p * sum,
    })
}

pub fn half_sq_norms(factors: &[Matrix]) -> f64 {
    0.5 * factors.iter().map(Matrix::frobenius_norm_sq).sum::<f64>()
}

/// `W_1 = S^{1/L} Vᵀ`, inner `W_l = S^{1/L}`, `W_L = U S^{1/L}`, truncated or
/// zero-padded to `d_inner` singular directions.
pub fn balanced_factorization(m: &Matrix, depth: usize, d_inner: usize) -> Result<Vec<Matrix>> {
    if depth < 2 {
        return Err(LabError::InvalidArgument(format!("depth must be at least 2, got {depth}")));
    }
    let rank = if m.max_abs() == 0.0 { 0 } else { numerical_rank(m, RANK_TOL)? };
    if d_inner < rank.max(1) {
        return Err(LabError::InvalidArgument(format!(
            "inner width {d_inner} is below rank {rank}"
        )));
    }
    let s = svd(m)?;
    let (p, q) = m.shape();
    let k = s.s.len().min(d_inner);
    let root: Vec<f64> = s.s[..k].iter().map(|x| x.powf(1.0 / depth as f64)).collect();
    let first = Matrix::from_fn(d_inner, q, |i, j| if i < k { root[i] * s.v[(j, i)] } else { 0.0 });
    let last = Matrix::from_fn(p, d_inner, |i, j| if j < k { s.u[(i, j)] * root[j] } else { 0.0 });
    let mut factors = vec![first];
    for _ in 1..depth - 1 {
        factors.push(Matrix::from_fn(d_inner, d_inner, |i, j| if i == j && i < k { root[i] } else { 0.0 }));
    }
    factors.push(last);
    Ok(factors)
}

#[derive(Clone, Debug)]
pub struct GaugeDescentOutcome {
    pub factors: Vec<Matrix>,
    pub value: f64,
    pub start_value: f64,
    /// `‖W_L⋯W_1 − M‖_max` at the end.
    pub product_residual: f64,
    pub iterations: usize,
}

/// Applies random invertible gauges `W_l ← G_l W_l G_{l-1}^{-1}` to the
/// balanced factorization, giving another exact factorization of `M`.
pub fn random_factorization(m: &Matrix, depth: usize, d_inner: usize, rng: &mut Rng) -> Result<Vec<Matrix>> {
    let mut f = balanced_factorization(m, depth, d_inner)?;
    for l in 0..depth - 1 {
        let g = &Matrix::identity(d_inner) + &rng.gaussian_matrix(d_inner, d_inner, 0.5 / (d_inner as f64).sqrt());
        let inv = solve(&g, &Matrix::identity(d_inner))?;
        f[l] = g.matmul(&f[l]);
        f[l + 1] = f[l + 1].matmul(&inv);
    }
    Ok(f)
}

/// Gradient descent on `½Σ‖W_l‖_F²` along the set of exact factorizations.
///
/// Each move rescales one interface: `W_l ← S W_l`, `W_{l+1} ← W_{l+1} S⁻¹`
/// with `S = I − τ (W_l W_lᵀ − W_{l+1}ᵀ W_{l+1})`, the descent direction of the
/// objective in the gauge at `S = I`. The product never changes.
pub fn gauge_descent(factors: &[Matrix], max_iters: usize, tol: f64) -> Result<GaugeDescentOutcome> {
    let mut f = factors.to_vec();
    let target = product(&f);
    let start_value = half_sq_norms(&f);
    let mut value = start_value;
    let mut iterations = 0;
    for it in 0..max_iters {
        iterations = it + 1;
        for l in 0..f.len() - 1 {
            let left = f[l].matmul_t(&f[l]);
            let right = f[l + 1].t_matmul(&f[l + 1]);
            let diff = &left - &right;
            let scale = left.trace() + right.trace();
            if scale == 0.0 {
                continue;
            }
            let tau = 0.25 / scale;
            let s = &Matrix::identity(diff.rows()) - &diff.scale(tau);
            let inv = solve(&s, &Matrix::identity(s.rows()))?;
            f[l] = s.matmul(&f[l]);
            f[l + 1] = f[l + 1].matmul(&inv);
        }
        let next = half_sq_norms(&f);
        let done = (value - next).abs() <= tol * value.max(1e-300);
        value = next;
        if done {
            break;
        }
    }
    let product_residual = (&product(&f) - &target).max_abs();
    Ok(GaugeDescentOutcome {
        factors: f,
        value,
        start_value,
        product_residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix() {
        let v = variational_schatten_value(&Matrix::zeros(2, 3), 3, 2).unwrap();
        assert_eq!(v.balanced, 0.0);
        assert_eq!(v.closed_form, 0.0);
    }

    #[test]
    fn depth_two_is_nuclear_norm() {
        let v = variational_schatten_value(&Matrix::diag(&[3.0, 1.0]), 2, 2).unwrap();
        assert!((v.balanced - 4.0).abs() < 1e-14);
        assert!((v.closed_form - 4.0).abs() < 1e-14);
        assert!((v.two_over_depth_form - 4.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_depth_three_by_brute_force() {
        // minimize ½(a² + b² + c²) subject to abc = 8
        let mut best = f64::INFINITY;
        let n = 2000;
        for i in 1..=n {
            let a = 4.0 * i as f64 / n as f64;
            for j in 1..=n {
                let b = 4.0 * j as f64 / n as f64;
                let c = 8.0 / (a * b);
                best = best.min(0.5 * (a * a + b * b + c * c));
            }
        }
        let v = variational_schatten_value(&Matrix::diag(&[8.0]), 3, 1).unwrap();
        assert!((v.closed_form - 6.0).abs() < 1e-12);
        assert!((v.balanced - 6.0).abs() < 1e-12);
        assert!((best - 6.0).abs() < 1e-4, "{best}");
        assert!((v.two_over_depth_form - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_factors_reproduce_the_matrix() {
        let mut rng = Rng::new(1);
        let m = rng.gaussian_matrix(4, 3, 1.0);
        for depth in 2..=4 {
            for d_inner in [3, 5] {
                let f = balanced_factorization(&m, depth, d_inner).unwrap();
                assert!((&product(&f) - &m).max_abs() < 1e-12);
            }
        }
        assert!(balanced_factorization(&m, 3, 2).is_err());
    }

    #[test]
    fn gauge_descent_recovers_minimum() {
        let mut rng = Rng::new(2);
        let m = rng.gaussian_matrix(3, 4, 1.0);
        for depth in 2..=4 {
            let start = random_factorization(&m, depth, 3, &mut rng).unwrap();
            let out = gauge_descent(&start, 20_000, 1e-15).unwrap();
            let v = variational_schatten_value(&m, depth, 3).unwrap();
            assert!(out.start_value > v.closed_form + 1e-3);
            assert!(out.value >= v.closed_form - 1e-9);
            assert!(out.value <= v.closed_form + 1e-6, "{} vs {}", out.value, v.closed_form);
            assert!(out.product_residual < 1e-9);
        }
    }
}
