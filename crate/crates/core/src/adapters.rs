//! LoRA-family adapters over a frozen base weight.
//!
//! * vanilla: `W = W̄ + B A`, both factors at rate `η`;
//! * plus: `B` at rate `γη`;
//! * deep: `W = W̄ + C B A` with the inner `B` at rate `η` and the outer
//!   factors at `γ_outer η`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{numerical_rank, svd, Matrix, Rng, DEFAULT_RANK_TOL};

pub const DEFAULT_DEEP_EPS: f64 = 1e-3;
pub const DEFAULT_GAMMA_OUTER: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LoraVariant {
    Vanilla,
    Plus { gamma: f64 },
    Deep { gamma_outer: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoraAdapter {
    base: Matrix,
    /// Outer left factor (`m x r`), deep variant only.
    c: Option<Matrix>,
    /// `m x r` for vanilla/plus, `r x r` for deep.
    b: Matrix,
    /// `r x n`.
    a: Matrix,
    variant: LoraVariant,
}

impl LoraAdapter {
    pub fn base(&self) -> &Matrix {
        &self.base
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn c(&self) -> Option<&Matrix> {
        self.c.as_ref()
    }

    pub fn variant(&self) -> LoraVariant {
        self.variant
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    /// Switches between vanilla and plus. Deep adapters come only from [`deep_lora_init`].
    pub fn with_variant(mut self, variant: LoraVariant) -> Result<Self> {
        match (self.c.is_some(), variant) {
            (false, LoraVariant::Deep { .. }) | (true, LoraVariant::Vanilla | LoraVariant::Plus { .. }) => {
                Err(LabError::InvalidArgument("cannot change between two- and three-factor adapters".into()))
            }
            _ => {
                validate_variant(variant)?;
                self.variant = variant;
                Ok(self)
            }
        }
    }

    /// The low-rank part `B A` or `C B A`.
    pub fn update(&self) -> Matrix {
        match &self.c {
            Some(c) => c.matmul(&self.b).matmul(&self.a),
            None => self.b.matmul(&self.a),
        }
    }

    pub fn effective_weight(&self) -> Matrix {
        &self.base + &self.update()
    }

    pub fn update_rank(&self, rel_tol: f64) -> Result<usize> {
        let u = self.update();
        if u.max_abs() == 0.0 {
            return Ok(0);
        }
        numerical_rank(&u, rel_tol)
    }

    /// Factor gradients from the gradient with respect to the effective weight:
    /// `[∇B, ∇A]` or `[∇C, ∇B, ∇A]`.
    pub fn factor_gradients(&self, grad_w: &Matrix) -> Result<Vec<Matrix>> {
        if grad_w.shape() != self.base.shape() {
            return Err(LabError::Dimension(format!(
                "gradient {:?} vs weight {:?}",
                grad_w.shape(),
                self.base.shape()
            )));
        }
        Ok(match &self.c {
            None => vec![grad_w.matmul_t(&self.a), self.b.t_matmul(grad_w)],
            Some(c) => {
                let ba = self.b.matmul(&self.a);
                let cb = c.matmul(&self.b);
                vec![
                    grad_w.matmul_t(&ba),
                    c.t_matmul(grad_w).matmul_t(&self.a),
                    cb.t_matmul(grad_w),
                ]
            }
        })
    }
}

fn validate_variant(v: LoraVariant) -> Result<()> {
    let rate = match v {
        LoraVariant::Vanilla => 1.0,
        LoraVariant::Plus { gamma } => gamma,
        LoraVariant::Deep { gamma_outer } => gamma_outer,
    };
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(LabError::InvalidArgument(format!("rate multiplier must be positive, got {rate}")));
    }
    Ok(())
}

fn check_rank(base: &Matrix, r: usize) -> Result<()> {
    if r == 0 || r >= base.rows().min(base.cols()) {
        return Err(LabError::InvalidArgument(format!(
            "adapter rank {r} must satisfy 1 <= r < {}",
            base.rows().min(base.cols())
        )));
    }
    Ok(())
}

/// Standard LoRA init: `B = 0`, `A` i.i.d. `N(0, 1/n)` for an `m x n` base.
pub fn lora_init(base: &Matrix, r: usize, rng: &mut Rng) -> Result<LoraAdapter> {
    base.ensure_finite("adapter base")?;
    check_rank(base, r)?;
    let (m, n) = base.shape();
    Ok(LoraAdapter {
        base: base.clone(),
        c: None,
        b: Matrix::zeros(m, r),
        a: rng.gaussian_matrix(r, n, (1.0 / n as f64).sqrt()),
        variant: LoraVariant::Vanilla,
    })
}

/// Deep LoRA init from the gradient at the base weight:
/// `C = ε U_r`, `B = ε I_r`, `A = ε V_rᵀ` with `U_r, V_r` the top-`r`
/// singular vectors of the descent direction `−grad`.
///
/// The top subspace of the descent direction is where the first steps move;
/// started from the bottom subspace the factor gradients vanish and training
/// never leaves the initial saddle.
pub fn deep_lora_init(
    base: &Matrix,
    r: usize,
    grad_at_init: &Matrix,
    eps: f64,
    gamma_outer: f64,
) -> Result<LoraAdapter> {
    base.ensure_finite("adapter base")?;
    check_rank(base, r)?;
    if grad_at_init.shape() != base.shape() {
        return Err(LabError::Dimension("gradient and base shapes differ".into()));
    }
    if !(eps > 0.0) {
        return Err(LabError::InvalidArgument(format!("init scale must be positive, got {eps}")));
    }
    let variant = LoraVariant::Deep { gamma_outer };
    validate_variant(variant)?;
    let s = svd(&grad_at_init.scale(-1.0))?;
    Ok(LoraAdapter {
        base: base.clone(),
        c: Some(s.top_left(r).scale(eps)),
        b: Matrix::identity(r).scale(eps),
        a: s.top_right(r).transpose().scale(eps),
        variant,
    })
}

/// Deep LoRA init anchored on an explicit factor subspace, for controls and tests.
pub fn deep_lora_from_factors(
    base: &Matrix,
    left: &Matrix,
    right: &Matrix,
    eps: f64,
    gamma_outer: f64,
) -> Result<LoraAdapter> {
    let r = left.cols();
    check_rank(base, r)?;
    if left.rows() != base.rows() || right.rows() != base.cols() || right.cols() != r {
        return Err(LabError::Dimension("factor bases do not match the base weight".into()));
    }
    let variant = LoraVariant::Deep { gamma_outer };
    validate_variant(variant)?;
    Ok(LoraAdapter {
        base: base.clone(),
        c: Some(left.scale(eps)),
        b: Matrix::identity(r).scale(eps),
        a: right.transpose().scale(eps),
        variant,
    })
}

/// One gradient step on the factors given `∇_W` at the current effective weight.
pub fn lora_step(adapter: &LoraAdapter, grad_w: &Matrix, eta: f64) -> Result<LoraAdapter> {
    grad_w.ensure_finite("adapter gradient")?;
    let grads = adapter.factor_gradients(grad_w)?;
    let mut next = adapter.clone();
    match adapter.variant {
        LoraVariant::Vanilla => {
            next.b.add_scaled(-eta, &grads[0]);
            next.a.add_scaled(-eta, &grads[1]);
        }
        LoraVariant::Plus { gamma } => {
            next.b.add_scaled(-gamma * eta, &grads[0]);
            next.a.add_scaled(-eta, &grads[1]);
        }
        LoraVariant::Deep { gamma_outer } => {
            let outer = gamma_outer * eta;
            next.c.as_mut().expect("deep adapter has C").add_scaled(-outer, &grads[0]);
            next.b.add_scaled(-eta, &grads[1]);
            next.a.add_scaled(-outer, &grads[2]);
        }
    }
    Ok(next)
}

/// `½‖W_eff − target‖_F²`.
pub fn quadratic_loss(adapter: &LoraAdapter, target: &Matrix) -> f64 {
    0.5 * (&adapter.effective_weight() - target).frobenius_norm_sq()
}

/// Runs `steps` adapter steps on `½‖W_eff − target‖_F²`; returns the final
/// adapter and the loss before every step plus the final loss.
pub fn fit_quadratic(
    adapter: &LoraAdapter,
    target: &Matrix,
    eta: f64,
    steps: usize,
) -> Result<(LoraAdapter, Vec<f64>)> {
    let mut cur = adapter.clone();
    let mut losses = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let residual = &cur.effective_weight() - target;
        let loss = 0.5 * residual.frobenius_norm_sq();
        if !loss.is_finite() || loss > 1e12 {
            return Err(LabError::Divergence(format!("adapter loss {loss:e}")));
        }
        losses.push(loss);
        cur = lora_step(&cur, &residual, eta)?;
    }
    losses.push(quadratic_loss(&cur, target));
    Ok((cur, losses))
}

/// Numerical rank of the adapter update at the default threshold.
pub fn adapter_rank(adapter: &LoraAdapter) -> Result<usize> {
    adapter.update_rank(DEFAULT_RANK_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_leaves_base_untouched() {
        let mut rng = Rng::new(1);
        let base = rng.gaussian_matrix(6, 5, 1.0);
        let ad = lora_init(&base, 2, &mut rng).unwrap();
        assert_eq!(ad.effective_weight(), base);
        assert_eq!(adapter_rank(&ad).unwrap(), 0);
        assert!(lora_init(&base, 5, &mut rng).is_err());
        assert!(lora_init(&base, 0, &mut rng).is_err());
    }

    #[test]
    fn init_variance_is_one_over_d() {
        let mut rng = Rng::new(2);
        let d = 64;
        let ad = lora_init(&Matrix::zeros(d, d), 64 - 1, &mut rng).unwrap();
        let n = ad.a().data().len() as f64;
        let var = ad.a().data().iter().map(|x| x * x).sum::<f64>() / n;
        assert!(var > 0.5 / d as f64 && var < 2.0 / d as f64, "{var}");
    }

    #[test]
    fn first_step_moves_only_b() {
        let mut rng = Rng::new(3);
        let base = rng.gaussian_matrix(5, 5, 1.0);
        let ad = lora_init(&base, 2, &mut rng).unwrap();
        let g = rng.gaussian_matrix(5, 5, 1.0);
        let next = lora_step(&ad, &g, 0.1).unwrap();
        assert_eq!(next.a(), ad.a());
        assert!(next.b().max_abs() > 0.0);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut rng = Rng::new(4);
        let ad = lora_init(&rng.gaussian_matrix(4, 4, 1.0), 2, &mut rng).unwrap();
        let next = lora_step(&ad, &Matrix::zeros(4, 4), 0.3).unwrap();
        assert_eq!(next, ad);
    }

    #[test]
    fn plus_with_unit_gamma_is_vanilla() {
        let mut rng = Rng::new(5);
        let base = rng.gaussian_matrix(6, 6, 1.0);
        let target = rng.gaussian_matrix(6, 6, 1.0);
        let v = lora_init(&base, 2, &mut Rng::new(9)).unwrap();
        let p = v.clone().with_variant(LoraVariant::Plus { gamma: 1.0 }).unwrap();
        let (fv, lv) = fit_quadratic(&v, &target, 0.05, 50).unwrap();
        let (fp, lp) = fit_quadratic(&p, &target, 0.05, 50).unwrap();
        assert_eq!(fv.b(), fp.b());
        assert_eq!(fv.a(), fp.a());
        assert_eq!(lv, lp);
    }

    #[test]
    fn deep_init_is_orthogonal_and_tiny() {
        let mut rng = Rng::new(6);
        let d = 64;
        let base = rng.gaussian_matrix(d, d, 1.0);
        let g = rng.gaussian_matrix(d, d, 1.0);
        let eps = 1e-3;
        let ad = deep_lora_init(&base, 8, &g, eps, DEFAULT_GAMMA_OUTER).unwrap();
        let c = ad.c().unwrap();
        assert!((&c.t_matmul(c) - &Matrix::identity(8).scale(eps * eps)).max_abs() < 1e-10);
        assert!((&ad.a().matmul_t(ad.a()) - &Matrix::identity(8).scale(eps * eps)).max_abs() < 1e-10);
        assert!(ad.update().frobenius_norm() <= eps.powi(3) * 8f64.sqrt() * (1.0 + 1e-12));
        // the update points along the descent direction
        assert!(ad.update().data().iter().zip(g.data()).map(|(u, x)| u * x).sum::<f64>() < 0.0);
    }

    #[test]
    fn variant_switching_is_checked() {
        let mut rng = Rng::new(7);
        let ad = lora_init(&rng.gaussian_matrix(4, 4, 1.0), 1, &mut rng).unwrap();
        assert!(ad.clone().with_variant(LoraVariant::Deep { gamma_outer: 0.1 }).is_err());
        assert!(ad.with_variant(LoraVariant::Plus { gamma: -1.0 }).is_err());
    }
}
