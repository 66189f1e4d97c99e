//! GaLore in GD mode and ReLoRA with gradient-SVD resets produce the same
//! iterates. This harness runs both from one starting point and measures the gap.

use crate::error::{LabError, Result};
use crate::linalg::{max_principal_angle, orthonormalize, singular_values, Matrix, Rng};

use super::adam::AdamConfig;
use super::galore::{galore_step, GaloreState, ProjectionSide};
use super::relora::{relora_step, Reinit, RelorState};

/// `φ(W) = ½‖A W − Y‖_F²` with gradient `Aᵀ(A W − Y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProblem {
    pub a: Matrix,
    pub y: Matrix,
    pub w0: Matrix,
}

impl QuadraticProblem {
    /// Gaussian `A (m x m)`, `Y (m x n)`, `W₀ (m x n)`.
    pub fn random(m: usize, n: usize, rng: &mut Rng) -> Self {
        Self {
            a: rng.gaussian_matrix(m, m, (1.0 / m as f64).sqrt()),
            y: rng.gaussian_matrix(m, n, 1.0),
            w0: rng.gaussian_matrix(m, n, 1.0),
        }
    }

    pub fn loss(&self, w: &Matrix) -> f64 {
        0.5 * (&self.a.matmul(w) - &self.y).frobenius_norm_sq()
    }

    pub fn gradient(&self, w: &Matrix) -> Matrix {
        self.a.t_matmul(&(&self.a.matmul(w) - &self.y))
    }

    /// `0.5 / σ₁(A)²`, safely inside the stable range.
    pub fn safe_step(&self) -> Result<f64> {
        let s1 = singular_values(&self.a)?[0];
        if s1 == 0.0 {
            return Err(LabError::Singular("zero problem matrix".into()));
        }
        Ok(0.5 / (s1 * s1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerMode {
    Gd,
    Adam,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    /// `max_t ‖W_galore(t) − W_relora(t)‖_max`.
    pub max_deviation: f64,
    /// Largest principal angle between the GaLore projector and ReLoRA's frozen factor.
    pub max_angle: f64,
    /// `1 + ‖W₀‖_max`, the scale the deviation is judged against.
    pub scale: f64,
    pub steps: usize,
}

/// Runs GaLore and ReLoRA side by side for `steps` steps.
pub fn verify_galore_relora_equivalence(
    problem: &QuadraticProblem,
    rank: usize,
    period: usize,
    eta: f64,
    steps: usize,
    mode: InnerMode,
    reinit: Reinit,
) -> Result<EquivalenceReport> {
    let (m, n) = problem.w0.shape();
    let side = ProjectionSide::for_shape(m, n);
    let adam = match mode {
        InnerMode::Gd => None,
        InnerMode::Adam => Some(AdamConfig::default()),
    };
    let mut gal = GaloreState::new((m, n), rank, period, 1.0, side, adam)?;
    let mut rel = RelorState::new(&problem.w0, rank, period, side, reinit, adam)?;
    let mut w = problem.w0.clone();
    let mut max_deviation = 0.0f64;
    let mut max_angle = 0.0f64;
    for _ in 0..steps {
        let g = problem.gradient(&w);
        let (w_next, gal_next) = galore_step(&w, &g, &gal, eta)?;
        rel = relora_step(&rel, |x| Ok(problem.gradient(x)), eta)?;
        w = w_next;
        gal = gal_next;
        max_deviation = max_deviation.max((&w - &rel.effective_weight()).max_abs());
        let projector = match side {
            ProjectionSide::Right => gal.q.clone(),
            _ => gal.p.clone(),
        }
        .expect("projector set on the first step");
        let frozen = orthonormalize(&rel.frozen_factor())?;
        max_angle = max_angle.max(max_principal_angle(&projector, &frozen)?);
    }
    Ok(EquivalenceReport {
        max_deviation,
        max_angle,
        scale: 1.0 + problem.w0.max_abs(),
        steps,
    })
}
