//! Dropout on a one-hidden-layer linear model and its deterministic equivalents.
//!
//! `E_z‖Y − (1/μ) W₂ Diag(z) W₁ X‖_F²` with `z_i ~ Bernoulli(μ)` expands to
//! `‖Y − W₂W₁X‖_F² + ((1−μ)/μ) Σ_i ‖W₂[:,i]‖² ‖(W₁X)[i,:]‖²`. For `X = I` the
//! minimum over width-`d_h` factorizations of the product `Z` brings the
//! regularizer to `‖Z‖_*² / d_h`, so the factorized problem matches
//! `min_Z ‖Y − Z‖_F² + c‖Z‖_*²` with `c = (1−μ)/(μ d_h)`.

use crate::error::{LabError, Result};
use crate::linalg::{Matrix, Rng};

use super::prox::{squared_nuclear_objective, squared_nuclear_prox};

#[derive(Clone, Debug, PartialEq)]
pub struct DropoutProblem {
    pub x: Matrix,
    pub y: Matrix,
    pub hidden: usize,
    pub keep: f64,
}

impl DropoutProblem {
    pub fn new(x: Matrix, y: Matrix, hidden: usize, keep: f64) -> Result<Self> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(LabError::InvalidArgument(format!("keep probability {keep} outside (0, 1]")));
        }
        if hidden == 0 || x.cols() != y.cols() {
            return Err(LabError::Dimension(format!(
                "x {:?}, y {:?}, hidden width {hidden}",
                x.shape(),
                y.shape()
            )));
        }
        Ok(Self { x, y, hidden, keep })
    }

    /// Regularization weight of the equivalent squared-nuclear problem.
    pub fn nuclear_weight(&self) -> f64 {
        (1.0 - self.keep) / (self.keep * self.hidden as f64)
    }

    fn check_factors(&self, w1: &Matrix, w2: &Matrix) -> Result<()> {
        let ok = w1.shape() == (self.hidden, self.x.rows()) && w2.shape() == (self.y.rows(), self.hidden);
        if !ok {
            return Err(LabError::Dimension(format!(
                "factors {:?} and {:?} do not match the problem",
                w1.shape(),
                w2.shape()
            )));
        }
        Ok(())
    }
}

/// Monte-Carlo mean and standard error over fresh masks.
pub fn dropout_mc_objective(
    p: &DropoutProblem,
    w1: &Matrix,
    w2: &Matrix,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    p.check_factors(w1, w2)?;
    if n_samples == 0 {
        return Err(LabError::InvalidArgument("need at least one sample".into()));
    }
    let h = w1.matmul(&p.x);
    let (k, n) = p.y.shape();
    let inv_keep = 1.0 / p.keep;
    let mut mask = vec![false; p.hidden];
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for s in 0..n_samples {
        for z in mask.iter_mut() {
            *z = rng.bernoulli(p.keep);
        }
        let mut loss = 0.0;
        for i in 0..k {
            for j in 0..n {
                let mut pred = 0.0;
                for (c, &on) in mask.iter().enumerate() {
                    if on {
                        pred += w2[(i, c)] * h[(c, j)];
                    }
                }
                let r = p.y[(i, j)] - inv_keep * pred;
                loss += r * r;
            }
        }
        let delta = loss - mean;
        mean += delta / (s + 1) as f64;
        m2 += delta * (loss - mean);
    }
    let var = if n_samples > 1 { m2 / (n_samples - 1) as f64 } else { 0.0 };
    Ok((mean, (var / n_samples as f64).sqrt()))
}

/// Closed-form expectation of the dropout objective.
pub fn dropout_deterministic_objective(p: &DropoutProblem, w1: &Matrix, w2: &Matrix) -> Result<f64> {
    p.check_factors(w1, w2)?;
    let h = w1.matmul(&p.x);
    let fit = (&p.y - &w2.matmul(&h)).frobenius_norm_sq();
    let mut reg = 0.0;
    for i in 0..p.hidden {
        let col: f64 = (0..w2.rows()).map(|r| w2[(r, i)] * w2[(r, i)]).sum();
        let row: f64 = h.row(i).iter().map(|x| x * x).sum();
        reg += col * row;
    }
    Ok(fit + (1.0 - p.keep) / p.keep * reg)
}

#[derive(Clone, Debug)]
pub struct DropoutEquivalenceReport {
    pub weight: f64,
    /// Best `W₂W₁` over restarts.
    pub factor_product: Matrix,
    pub prox_solution: Matrix,
    pub factor_objective: f64,
    pub prox_objective: f64,
    pub objective_gap: f64,
    pub frobenius_gap: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorSearch {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for FactorSearch {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iters: 20_000,
            grad_tol: 1e-10,
        }
    }
}

/// Minimizes the deterministic objective over factors (with `X = I`) from
/// several random starts and compares against the squared-nuclear prox.
pub fn dropout_global_equivalence(
    p: &DropoutProblem,
    search: FactorSearch,
    rng: &mut Rng,
) -> Result<DropoutEquivalenceReport> {
    let d = p.x.rows();
    if p.x != Matrix::identity(d) {
        return Err(LabError::InvalidArgument("global equivalence needs X = I".into()));
    }
    let (k, _) = p.y.shape();
    let scale = (p.y.frobenius_norm() / (p.hidden as f64 * (k + d) as f64).sqrt()).max(1e-3);
    let mut best: Option<(f64, Matrix)> = None;
    for _ in 0..search.restarts.max(1) {
        let w1 = rng.gaussian_matrix(p.hidden, d, scale);
        let w2 = rng.gaussian_matrix(k, p.hidden, scale);
        let (w1, w2, value) = descend(p, w1, w2, search)?;
        if best.as_ref().map_or(true, |(v, _)| value < *v) {
            best = Some((value, w2.matmul(&w1)));
        }
    }
    let (factor_objective, factor_product) = best.expect("at least one restart");
    let c = p.nuclear_weight();
    let prox_solution = squared_nuclear_prox(&p.y, c)?;
    let prox_objective = squared_nuclear_objective(&prox_solution, &p.y, c)?;
    Ok(DropoutEquivalenceReport {
        weight: c,
        frobenius_gap: (&factor_product - &prox_solution).frobenius_norm(),
        objective_gap: (factor_objective - prox_objective).abs(),
        factor_product,
        prox_solution,
        factor_objective,
        prox_objective,
    })
}

/// Gradient descent with backtracking on the deterministic objective, `X = I`.
fn descend(p: &DropoutProblem, mut w1: Matrix, mut w2: Matrix, search: FactorSearch) -> Result<(Matrix, Matrix, f64)> {
    let reg = (1.0 - p.keep) / p.keep;
    let objective = |w1: &Matrix, w2: &Matrix| dropout_deterministic_objective(p, w1, w2);
    let mut value = objective(&w1, &w2)?;
    let mut step = 0.1;
    for _ in 0..search.max_iters {
        let r = &w2.matmul(&w1) - &p.y;
        let row_sq: Vec<f64> = (0..p.hidden).map(|i| w1.row(i).iter().map(|x| x * x).sum()).collect();
        let col_sq: Vec<f64> = (0..p.hidden)
            .map(|i| (0..w2.rows()).map(|r| w2[(r, i)] * w2[(r, i)]).sum())
            .collect();
        let mut g1 = w2.t_matmul(&r).scale(2.0);
        let mut g2 = r.matmul_t(&w1).scale(2.0);
        for i in 0..p.hidden {
            for j in 0..w1.cols() {
                g1[(i, j)] += 2.0 * reg * col_sq[i] * w1[(i, j)];
            }
            for row in 0..w2.rows() {
                g2[(row, i)] += 2.0 * reg * row_sq[i] * w2[(row, i)];
            }
        }
        let gnorm_sq = g1.frobenius_norm_sq() + g2.frobenius_norm_sq();
        if gnorm_sq.sqrt() <= search.grad_tol {
            break;
        }
        loop {
            let mut n1 = w1.clone();
            let mut n2 = w2.clone();
            n1.add_scaled(-step, &g1);
            n2.add_scaled(-step, &g2);
            let next = objective(&n1, &n2)?;
            if next <= value - 0.5 * step * gnorm_sq {
                w1 = n1;
                w2 = n2;
                value = next;
                step *= 1.5;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                return Ok((w1, w2, value));
            }
        }
    }
    Ok((w1, w2, value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(rng: &mut Rng, keep: f64) -> (DropoutProblem, Matrix, Matrix) {
        let x = rng.gaussian_matrix(3, 4, 1.0);
        let y = rng.gaussian_matrix(2, 4, 1.0);
        let p = DropoutProblem::new(x, y, 3, keep).unwrap();
        let w1 = rng.gaussian_matrix(3, 3, 1.0);
        let w2 = rng.gaussian_matrix(2, 3, 1.0);
        (p, w1, w2)
    }

    #[test]
    fn keep_one_is_plain_least_squares() {
        let mut rng = Rng::new(1);
        let (p, w1, w2) = problem(&mut rng, 1.0);
        let plain = (&p.y - &w2.matmul(&w1).matmul(&p.x)).frobenius_norm_sq();
        let (mean, se) = dropout_mc_objective(&p, &w1, &w2, 50, &mut rng).unwrap();
        assert!((mean - plain).abs() < 1e-12);
        assert_eq!(se, 0.0);
        assert!((dropout_deterministic_objective(&p, &w1, &w2).unwrap() - plain).abs() < 1e-12);
    }

    #[test]
    fn zero_first_layer_gives_target_norm() {
        let mut rng = Rng::new(2);
        let (p, _, w2) = problem(&mut rng, 0.5);
        let (mean, _) = dropout_mc_objective(&p, &Matrix::zeros(3, 3), &w2, 100, &mut rng).unwrap();
        assert!((mean - p.y.frobenius_norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn scalar_expectation_by_hand() {
        // y, x, w1, w2 scalars: E[(y − z w2 w1 x / μ)²] = y² − 2 y w2 w1 x + (w2 w1 x)²/μ
        let (y, x, a, b, mu) = (1.5, 0.7, -0.4, 2.0, 0.3);
        let p = DropoutProblem::new(Matrix::diag(&[x]), Matrix::diag(&[y]), 1, mu).unwrap();
        let v = dropout_deterministic_objective(&p, &Matrix::diag(&[a]), &Matrix::diag(&[b])).unwrap();
        let f = b * a * x;
        assert!((v - (y * y - 2.0 * y * f + f * f / mu)).abs() < 1e-12);
    }

    #[test]
    fn rank_one_example_matches_prox() {
        let p = DropoutProblem::new(Matrix::identity(2), Matrix::diag(&[2.0, 0.0]), 1, 0.5).unwrap();
        assert_eq!(p.nuclear_weight(), 1.0);
        let rep = dropout_global_equivalence(&p, FactorSearch::default(), &mut Rng::new(3)).unwrap();
        assert!(rep.frobenius_gap < 1e-4, "{rep:?}");
        assert!((&rep.prox_solution - &Matrix::diag(&[1.0, 0.0])).max_abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_keep() {
        assert!(DropoutProblem::new(Matrix::identity(2), Matrix::identity(2), 2, 0.0).is_err());
    }
}
