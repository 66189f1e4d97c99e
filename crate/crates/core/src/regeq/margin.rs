//! Max-margin separators through the origin and the exponential-loss trainer
//! whose direction should approach them.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{dot, solve, Matrix, Rng};
use crate::network::{chain_gradients, product};

pub const MAX_DIM: usize = 3;
pub const MAX_POINTS: usize = 6;
pub const MAX_POINT_NORM: f64 = 10.0;
/// Cap on `exp(−margin)` before separation.
pub const EXP_CLIP: f64 = 1e6;

const KKT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginProblem {
    points: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl MarginProblem {
    /// Rejects inputs the enumeration oracle cannot certify as separable.
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n == 0 || n > MAX_POINTS || labels.len() != n {
            return Err(LabError::Dimension(format!(
                "need 1..={MAX_POINTS} points with one label each, got {n} points and {} labels",
                labels.len()
            )));
        }
        let d = points[0].len();
        if d == 0 || d > MAX_DIM || points.iter().any(|p| p.len() != d) {
            return Err(LabError::Dimension(format!("points must share a dimension in 1..={MAX_DIM}")));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(LabError::InvalidArgument("labels must be +1 or -1".into()));
        }
        for p in &points {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(LabError::NonFinite("margin point"));
            }
            if dot(p, p).sqrt() > MAX_POINT_NORM {
                return Err(LabError::InvalidArgument(format!("point norm exceeds {MAX_POINT_NORM}")));
            }
        }
        let problem = Self { points, labels };
        max_margin_oracle(&problem)?;
        Ok(problem)
    }

    /// `x = ±e₁` with labels `±1`.
    pub fn symmetric_pair() -> Self {
        Self::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![1.0, -1.0]).expect("separable")
    }

    /// `(1, 0) → +1`, `(0, 1) → −1`.
    pub fn orthogonal_pair() -> Self {
        Self::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, -1.0]).expect("separable")
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        let points = self.points.iter().map(|p| p.iter().map(|v| v * c).collect()).collect();
        Self::new(points, self.labels.clone())
    }

    /// Rows `y_i x_iᵀ`.
    fn signed_rows(&self) -> Matrix {
        Matrix::from_fn(self.len(), self.dim(), |i, j| self.labels[i] * self.points[i][j])
    }

    pub fn min_margin(&self, w: &[f64]) -> f64 {
        self.points
            .iter()
            .zip(&self.labels)
            .map(|(x, y)| y * dot(w, x))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginSolution {
    /// Minimum-norm `w` with `y_i wᵀx_i ≥ 1`.
    pub w: Vec<f64>,
    pub direction: Vec<f64>,
    pub active: Vec<usize>,
}

/// Exact max-margin separator by enumerating active sets of at most `d` points.
///
/// For each subset the equality system `y_i wᵀx_i = 1` is solved at minimum
/// norm, `w = Aᵀ(AAᵀ)⁻¹1`; candidates with non-negative multipliers that
/// satisfy every constraint are kept and the shortest wins.
pub fn max_margin_oracle(p: &MarginProblem) -> Result<MarginSolution> {
    let rows = p.signed_rows();
    let n = p.len();
    let k_max = p.dim().min(n);
    let mut best: Option<(f64, Vec<f64>, Vec<usize>)> = None;
    for mask in 1u32..(1 << n) {
        let subset: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if subset.len() > k_max {
            continue;
        }
        let a = Matrix::from_fn(subset.len(), p.dim(), |i, j| rows[(subset[i], j)]);
        let gram = a.matmul_t(&a);
        let Ok(mult) = solve(&gram, &Matrix::from_fn(subset.len(), 1, |_, _| 1.0)) else {
            continue;
        };
        if (0..subset.len()).any(|i| mult[(i, 0)] < -KKT_TOL) {
            continue;
        }
        let w = a.t_matmul(&mult).column(0);
        if p.min_margin(&w) < 1.0 - 1e-9 {
            continue;
        }
        let nrm = dot(&w, &w).sqrt();
        match &best {
            Some((b, bw, _)) if nrm >= *b - 1e-12 => {
                if (nrm - b).abs() <= 1e-9 * b.max(1.0) {
                    let gap = w.iter().zip(bw).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                    if gap > 1e-6 * b.max(1.0) {
                        return Err(LabError::InvalidArgument("max-margin direction is not unique".into()));
                    }
                }
            }
            _ => best = Some((nrm, w, subset)),
        }
    }
    let (nrm, w, active) = best.ok_or_else(|| LabError::Infeasible("points are not separable through the origin".into()))?;
    let direction = w.iter().map(|v| v / nrm).collect();
    Ok(MarginSolution { w, direction, active })
}

/// Angle between two nonzero vectors, stable near `0` and `π`.
pub fn vector_angle(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    let mut diff = 0.0;
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpLossOutcome {
    /// `W_L⋯W_1` over its Frobenius norm.
    pub direction: Vec<f64>,
    pub angle_to_oracle: f64,
    /// First step at which every point was classified correctly.
    pub separated_at: Option<usize>,
    pub final_loss: f64,
    pub final_product_norm: f64,
}

impl ExpLossOutcome {
    /// Training never separated the data, so no directional claim applies.
    pub fn inconclusive(&self) -> bool {
        self.separated_at.is_none()
    }
}

/// Largest admissible step for points of the given problem.
pub fn max_exp_loss_step(p: &MarginProblem) -> f64 {
    let r2 = p.points().iter().map(|x| dot(x, x)).fold(0.0, f64::max);
    0.5 / r2
}

/// Gradient descent on `Σ exp(−y_i W_L⋯W_1 x_i)` for a depth-`L` linear
/// network with hidden widths `widths` (length `L − 1`) and scalar output.
pub fn exp_loss_trainer(
    p: &MarginProblem,
    depth: usize,
    widths: &[usize],
    eta: f64,
    steps: usize,
    rng: &mut Rng,
) -> Result<ExpLossOutcome> {
    if depth == 0 || widths.len() + 1 != depth || widths.contains(&0) {
        return Err(LabError::InvalidArgument(format!(
            "depth {depth} needs {} positive hidden widths, got {widths:?}",
            depth.saturating_sub(1)
        )));
    }
    let limit = max_exp_loss_step(p);
    if !(eta > 0.0 && eta <= limit) {
        return Err(LabError::InvalidArgument(format!("step {eta} must lie in (0, {limit}]")));
    }
    let oracle = max_margin_oracle(p)?;
    let mut dims = vec![p.dim()];
    dims.extend_from_slice(widths);
    dims.push(1);
    let mut ws: Vec<Matrix> = (0..depth).map(|l| rng.gaussian_matrix(dims[l + 1], dims[l], 1e-3)).collect();
    let rows = p.signed_rows();
    let n = p.len();
    let mut separated_at = None;
    let mut loss = 0.0;
    for t in 0..=steps {
        let w = product(&ws).into_data();
        let margins: Vec<f64> = (0..n).map(|i| dot(rows.row(i), &w)).collect();
        if separated_at.is_none() && margins.iter().all(|&m| m > 0.0) {
            separated_at = Some(t);
        }
        let weights: Vec<f64> = margins.iter().map(|&m| (-m).exp().min(EXP_CLIP)).collect();
        loss = weights.iter().sum();
        if t == steps {
            break;
        }
        // d loss / d w = −Σ e_i y_i x_i
        let upstream = Matrix::from_fn(1, p.dim(), |_, j| -(0..n).map(|i| weights[i] * rows[(i, j)]).sum::<f64>());
        let grads = chain_gradients(&ws, &upstream);
        for (w, g) in ws.iter_mut().zip(&grads) {
            w.add_scaled(-eta, g);
        }
        if !ws.iter().all(Matrix::is_finite) {
            return Err(LabError::Divergence(format!("exp-loss training overflowed at step {t}")));
        }
    }
    let w = product(&ws).into_data();
    let nrm = dot(&w, &w).sqrt();
    let direction: Vec<f64> = w.iter().map(|v| v / nrm).collect();
    Ok(ExpLossOutcome {
        angle_to_oracle: vector_angle(&direction, &oracle.direction),
        direction,
        separated_at,
        final_loss: loss,
        final_product_norm: nrm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn oracle_examples() {
        let s = max_margin_oracle(&MarginProblem::symmetric_pair()).unwrap();
        assert!(close(&s.w, &[1.0, 0.0], 1e-12));
        let s = max_margin_oracle(&MarginProblem::orthogonal_pair()).unwrap();
        assert!(close(&s.w, &[1.0, -1.0], 1e-12));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(&s.direction, &[h, -h], 1e-12));
    }

    #[test]
    fn oracle_direction_is_scale_invariant() {
        let p = MarginProblem::new(
            vec![vec![1.0, 2.0, 0.5], vec![-0.5, 1.0, 1.0], vec![2.0, -1.0, 0.0], vec![-1.0, -1.0, 0.3]],
            vec![1.0, 1.0, 1.0, -1.0],
        )
        .unwrap();
        let base = max_margin_oracle(&p).unwrap();
        for c in [0.1, 2.0, 3.7] {
            let s = max_margin_oracle(&p.scaled(c).unwrap()).unwrap();
            assert!(close(&s.direction, &base.direction, 1e-10));
        }
    }

    #[test]
    fn rejects_non_separable() {
        let err = MarginProblem::new(vec![vec![1.0, 0.0], vec![2.0, 0.0]], vec![1.0, -1.0]);
        assert!(matches!(err, Err(LabError::Infeasible(_))));
        let err = MarginProblem::new(vec![vec![0.0, 0.0]], vec![1.0]);
        assert!(err.is_err());
        assert!(MarginProblem::new(vec![vec![20.0]], vec![1.0]).is_err());
    }

    #[test]
    fn angle_is_stable() {
        assert_eq!(vector_angle(&[1.0, 0.0], &[2.0, 0.0]), 0.0);
        let a = vector_angle(&[1.0, 0.0], &[1.0, 1e-9]);
        assert!((a - 1e-9).abs() < 1e-18);
        assert!((vector_angle(&[1.0, 0.0], &[-1.0, 0.0]) - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn shallow_trainer_reaches_max_margin() {
        let out = exp_loss_trainer(&MarginProblem::orthogonal_pair(), 1, &[], 0.1, 20_000, &mut Rng::new(1)).unwrap();
        assert!(!out.inconclusive());
        assert!(out.angle_to_oracle < 1e-2, "{}", out.angle_to_oracle);
        assert!(exp_loss_trainer(&MarginProblem::orthogonal_pair(), 1, &[], 0.6, 10, &mut Rng::new(1)).is_err());
        assert!(exp_loss_trainer(&MarginProblem::orthogonal_pair(), 2, &[], 0.1, 10, &mut Rng::new(1)).is_err());
    }
}
