use crate::error::{LabError, Result};
use crate::linalg::{svd, Matrix, Rng};

use super::adam::{AdamConfig, AdamState};
use super::galore::ProjectionSide;

/// How the frozen factor is re-drawn at each reset.
#[derive(Clone, Debug, PartialEq)]
pub enum Reinit {
    /// Top-`r` singular vectors of the full gradient at the current weight.
    GradientSvd,
    /// Gaussian factor with `N(0, 1/dim)` entries.
    Random(Rng),
}

/// ReLoRA state for one `m x n` weight: `W = merged + B A`.
///
/// With `Left` the factor `B (m x r)` is frozen between resets and `A` is
/// trained; with `Right` the roles swap.
#[derive(Clone, Debug, PartialEq)]
pub struct RelorState {
    pub merged: Matrix,
    pub b: Matrix,
    pub a: Matrix,
    pub period: usize,
    pub side: ProjectionSide,
    pub reinit: Reinit,
    pub inner: Option<AdamState>,
    pub t: usize,
}

impl RelorState {
    pub fn new(
        w0: &Matrix,
        rank: usize,
        period: usize,
        side: ProjectionSide,
        reinit: Reinit,
        adam: Option<AdamConfig>,
    ) -> Result<Self> {
        let (m, n) = w0.shape();
        if rank == 0 || rank > m.min(n) {
            return Err(LabError::InvalidArgument(format!("adapter rank {rank} out of range")));
        }
        if period == 0 {
            return Err(LabError::InvalidArgument("reset period must be at least 1".into()));
        }
        let trained = match side {
            ProjectionSide::Left => (rank, n),
            ProjectionSide::Right => (m, rank),
            ProjectionSide::TwoSided => {
                return Err(LabError::InvalidArgument("ReLoRA freezes exactly one factor".into()))
            }
        };
        Ok(Self {
            merged: w0.clone(),
            b: Matrix::zeros(m, rank),
            a: Matrix::zeros(rank, n),
            period,
            side,
            reinit,
            inner: adam.map(|c| AdamState::new(trained.0, trained.1, c)),
            t: 0,
        })
    }

    pub fn rank(&self) -> usize {
        self.b.cols()
    }

    pub fn effective_weight(&self) -> Matrix {
        &self.merged + &self.b.matmul(&self.a)
    }

    /// Orthonormal-or-random basis of the frozen factor's span.
    pub fn frozen_factor(&self) -> Matrix {
        match self.side {
            ProjectionSide::Right => self.a.transpose(),
            _ => self.b.clone(),
        }
    }

    fn reset(&mut self, grad: &Matrix) -> Result<()> {
        self.merged = self.effective_weight();
        let r = self.rank();
        let (m, n) = self.merged.shape();
        let frozen = match &mut self.reinit {
            Reinit::GradientSvd => {
                let s = svd(grad)?;
                match self.side {
                    ProjectionSide::Right => s.top_right(r),
                    _ => s.top_left(r),
                }
            }
            Reinit::Random(rng) => {
                let dim = if self.side == ProjectionSide::Right { n } else { m };
                rng.gaussian_matrix(dim, r, (1.0 / dim as f64).sqrt())
            }
        };
        match self.side {
            ProjectionSide::Right => {
                self.a = frozen.transpose();
                self.b = Matrix::zeros(m, r);
            }
            _ => {
                self.b = frozen;
                self.a = Matrix::zeros(r, n);
            }
        }
        Ok(())
    }
}

/// One ReLoRA step.
///
/// `grad_at` maps an effective weight to `∇φ`. At `t mod T = 0` the current
/// product is merged, the frozen factor is re-drawn and the trained factor is
/// zeroed, which leaves the effective weight unchanged; the trained factor
/// then takes its step (`A ← A − η Bᵀ∇φ`) in the same call.
pub fn relora_step(
    state: &RelorState,
    mut grad_at: impl FnMut(&Matrix) -> Result<Matrix>,
    eta: f64,
) -> Result<RelorState> {
    let mut next = state.clone();
    let grad = grad_at(&next.effective_weight())?;
    grad.ensure_finite("relora gradient")?;
    if next.t % next.period == 0 {
        next.reset(&grad)?;
    }
    let factor_grad = match next.side {
        ProjectionSide::Right => grad.matmul_t(&next.a),
        _ => next.b.t_matmul(&grad),
    };
    let dir = match next.inner.as_mut() {
        Some(adam) => adam.direction(&factor_grad)?,
        None => factor_grad,
    };
    match next.side {
        ProjectionSide::Right => next.b.add_scaled(-eta, &dir),
        _ => next.a.add_scaled(-eta, &dir),
    }
    next.t += 1;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(target: Matrix) -> impl FnMut(&Matrix) -> Result<Matrix> {
        move |w: &Matrix| Ok(w - &target)
    }

    #[test]
    fn reset_does_not_move_the_weight() {
        let mut rng = Rng::new(1);
        let w0 = rng.gaussian_matrix(5, 5, 1.0);
        let target = rng.gaussian_matrix(5, 5, 1.0);
        let mut st = RelorState::new(&w0, 2, 3, ProjectionSide::Left, Reinit::GradientSvd, None).unwrap();
        for _ in 0..3 {
            st = relora_step(&st, quad(target.clone()), 0.1).unwrap();
        }
        let before = st.effective_weight();
        let mut probe = st.clone();
        probe.reset(&(&before - &target)).unwrap();
        assert!((&probe.effective_weight() - &before).max_abs() < 1e-15);
        assert_eq!(probe.a, Matrix::zeros(2, 5));
        assert!(probe.b.orthonormality_residual() < 1e-12);
    }

    #[test]
    fn unit_period_is_projected_gd() {
        let mut rng = Rng::new(2);
        let w0 = rng.gaussian_matrix(4, 6, 1.0);
        let target = rng.gaussian_matrix(4, 6, 1.0);
        let st = RelorState::new(&w0, 2, 1, ProjectionSide::Left, Reinit::GradientSvd, None).unwrap();
        let next = relora_step(&st, quad(target.clone()), 0.2).unwrap();
        let g = &w0 - &target;
        let p = svd(&g).unwrap().top_left(2);
        let mut expected = w0.clone();
        expected.add_scaled(-0.2, &p.matmul(&p.t_matmul(&g)));
        assert!((&next.effective_weight() - &expected).max_abs() < 1e-12);
    }

    #[test]
    fn frozen_factor_holds_between_resets() {
        let mut rng = Rng::new(3);
        let w0 = rng.gaussian_matrix(6, 4, 1.0);
        let target = rng.gaussian_matrix(6, 4, 1.0);
        let mut st =
            RelorState::new(&w0, 2, 4, ProjectionSide::Right, Reinit::GradientSvd, None).unwrap();
        st = relora_step(&st, quad(target.clone()), 0.1).unwrap();
        let frozen = st.a.clone();
        for _ in 0..3 {
            st = relora_step(&st, quad(target.clone()), 0.1).unwrap();
            assert_eq!(st.a, frozen);
        }
    }
}
