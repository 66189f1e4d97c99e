use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{svd, Matrix};

use super::adam::{AdamConfig, AdamState};

/// Which side of the gradient the projector acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionSide {
    /// `P (m x r)` from the left singular vectors; used when `m ≤ n`.
    Left,
    /// `Q (n x r)` from the right singular vectors; used when `m > n`.
    Right,
    /// Both: `R = PᵀGQ`.
    TwoSided,
}

impl ProjectionSide {
    /// One-sided choice for an `m x n` weight.
    pub fn for_shape(m: usize, n: usize) -> Self {
        if m <= n {
            ProjectionSide::Left
        } else {
            ProjectionSide::Right
        }
    }
}

/// GaLore optimizer state for one `m x n` weight.
#[derive(Clone, Debug, PartialEq)]
pub struct GaloreState {
    pub shape: (usize, usize),
    pub rank: usize,
    pub period: usize,
    pub alpha: f64,
    pub side: ProjectionSide,
    /// Left projector `P` (`Left`, `TwoSided`).
    pub p: Option<Matrix>,
    /// Right projector `Q` (`Right`, `TwoSided`).
    pub q: Option<Matrix>,
    /// Adam on the projected gradient; `None` is plain GD in the subspace.
    pub inner: Option<AdamState>,
    /// Number of steps taken so far.
    pub t: usize,
}

impl GaloreState {
    pub fn new(
        shape: (usize, usize),
        rank: usize,
        period: usize,
        alpha: f64,
        side: ProjectionSide,
        adam: Option<AdamConfig>,
    ) -> Result<Self> {
        let (m, n) = shape;
        if rank == 0 || rank > m.min(n) {
            return Err(LabError::InvalidArgument(format!(
                "projection rank {rank} must lie in 1..={}",
                m.min(n)
            )));
        }
        if period == 0 {
            return Err(LabError::InvalidArgument("refresh period must be at least 1".into()));
        }
        let inner_shape = match side {
            ProjectionSide::Left => (rank, n),
            ProjectionSide::Right => (m, rank),
            ProjectionSide::TwoSided => (rank, rank),
        };
        Ok(Self {
            shape,
            rank,
            period,
            alpha,
            side,
            p: None,
            q: None,
            inner: adam.map(|c| AdamState::new(inner_shape.0, inner_shape.1, c)),
            t: 0,
        })
    }

    fn refresh(&mut self, grad: &Matrix) -> Result<()> {
        let s = svd(grad)?;
        let r = self.rank;
        match self.side {
            ProjectionSide::Left => self.p = Some(s.top_left(r)),
            ProjectionSide::Right => self.q = Some(s.top_right(r)),
            ProjectionSide::TwoSided => {
                self.p = Some(s.top_left(r));
                self.q = Some(s.top_right(r));
            }
        }
        Ok(())
    }

    fn project(&self, grad: &Matrix) -> Matrix {
        match self.side {
            ProjectionSide::Left => self.p.as_ref().unwrap().t_matmul(grad),
            ProjectionSide::Right => grad.matmul(self.q.as_ref().unwrap()),
            ProjectionSide::TwoSided => {
                self.p.as_ref().unwrap().t_matmul(grad).matmul(self.q.as_ref().unwrap())
            }
        }
    }

    fn lift(&self, n: &Matrix) -> Matrix {
        match self.side {
            ProjectionSide::Left => self.p.as_ref().unwrap().matmul(n),
            ProjectionSide::Right => n.matmul_t(self.q.as_ref().unwrap()),
            ProjectionSide::TwoSided => {
                self.p.as_ref().unwrap().matmul(n).matmul_t(self.q.as_ref().unwrap())
            }
        }
    }
}

/// One GaLore step with the descent sign convention:
/// `R = PᵀG`, `N = R` (GD) or `Adam(R)`, `W ← W − η α P N`.
///
/// The projector is recomputed from the SVD of `grad` whenever `t mod T = 0`
/// and reused otherwise. Adam moments carry across refreshes.
pub fn galore_step(w: &Matrix, grad: &Matrix, state: &GaloreState, eta: f64) -> Result<(Matrix, GaloreState)> {
    if w.shape() != state.shape || grad.shape() != state.shape {
        return Err(LabError::Dimension(format!(
            "weight {:?} / gradient {:?} vs state {:?}",
            w.shape(),
            grad.shape(),
            state.shape
        )));
    }
    grad.ensure_finite("galore gradient")?;
    let mut next = state.clone();
    if next.t % next.period == 0 {
        next.refresh(grad)?;
    }
    let r = next.project(grad);
    let n = match next.inner.as_mut() {
        Some(adam) => adam.direction(&r)?,
        None => r,
    };
    let update = next.lift(&n);
    let mut w_new = w.clone();
    w_new.add_scaled(-eta * next.alpha, &update);
    next.t += 1;
    Ok((w_new, next))
}

/// Optimizer-state float counts for one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub layer: String,
    pub full_adam_floats: u64,
    pub galore_floats: u64,
    pub ratio: f64,
}

/// Full Adam keeps `2mn` floats. One-sided GaLore keeps two `r x n` moments and
/// the `m x r` projector when `m ≤ n` (`2nr + mr`), and `2mr + nr` otherwise.
pub fn memory_report(layer: impl Into<String>, m: usize, n: usize, r: usize) -> MemoryReport {
    let (m64, n64, r64) = (m as u64, n as u64, r as u64);
    let full = 2 * m64 * n64;
    let galore = if m <= n {
        2 * n64 * r64 + m64 * r64
    } else {
        2 * m64 * r64 + n64 * r64
    };
    MemoryReport {
        layer: layer.into(),
        full_adam_floats: full,
        galore_floats: galore,
        ratio: galore as f64 / full as f64,
    }
}
