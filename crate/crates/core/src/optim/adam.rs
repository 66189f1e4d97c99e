use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stab: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps_stab: 1e-8,
        }
    }
}

/// Adam moments for one parameter block.
///
/// `m` and `v` hold the raw exponential averages; bias correction is applied
/// when the direction is formed, with `t` counted from 1 at the first update.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, config: AdamConfig) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
            config,
        }
    }

    /// Folds `grad` into the moments and returns `M̂ / (√V̂ + ε)`.
    pub fn direction(&mut self, grad: &Matrix) -> Result<Matrix> {
        if grad.shape() != self.m.shape() {
            return Err(LabError::Dimension(format!(
                "gradient {:?} vs moments {:?}",
                grad.shape(),
                self.m.shape()
            )));
        }
        let AdamConfig { beta1, beta2, eps_stab } = self.config;
        self.t += 1;
        self.m = self.m.zip_map(grad, |m, g| beta1 * m + (1.0 - beta1) * g);
        self.v = self.v.zip_map(grad, |v, g| beta2 * v + (1.0 - beta2) * g * g);
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        Ok(self.m.zip_map(&self.v, |m, v| (m / c1) / ((v / c2).sqrt() + eps_stab)))
    }
}

/// `W ← W − η M̂/(√V̂ + ε)`.
pub fn adam_step(w: &Matrix, grad: &Matrix, state: &AdamState, eta: f64) -> Result<(Matrix, AdamState)> {
    let mut next = state.clone();
    let dir = next.direction(grad)?;
    let mut w_new = w.clone();
    w_new.add_scaled(-eta, &dir);
    Ok((w_new, next))
}
