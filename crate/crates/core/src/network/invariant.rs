//! Invariant singular subspaces of deep linear training.
//!
//! Under orthogonal initialization, gradient descent never touches the
//! subspace `V₁ = N(Φ) ∩ N(Φᵀ W_L⋯W_1)` and its images `U_l = W_l⋯W_1 V₁`.
//! On that block every layer acts as a multiple `ρ_l` of an isometry, so
//! `d − 2r` singular values of each layer stay equal and their singular
//! subspaces stay fixed.
//!
//! Repeated values can interleave with the moving top of the spectrum, so
//! "the bottom `d − 2r` by index" is not a stable object. The block is
//! identified once from the initial weights and tracked directly.

use crate::check::Check;
use crate::error::{LabError, Result};
use crate::linalg::{max_principal_angle, nullspace, numerical_rank, orthonormalize, svd, Matrix};

use super::train::Snapshot;
use super::product;

const NULL_TOL: f64 = 1e-10;

/// `(U₁, V₁)`: `V₁` spans `N(Φ) ∩ N(Φᵀ W_L⋯W_1)`, `U₁` is `W_1 V₁` orthonormalized.
///
/// Fails when the intersection is smaller than `d − 2r`, which happens only
/// if the weights are not scaled orthogonal or `Φ` is not rank `r`.
pub fn construct_null_intersection(phi: &Matrix, weights: &[Matrix]) -> Result<(Matrix, Matrix)> {
    let v1 = intersection(phi, weights)?;
    let u1 = orthonormalize(&weights[0].matmul(&v1))?;
    Ok((u1, v1))
}

fn intersection(phi: &Matrix, weights: &[Matrix]) -> Result<Matrix> {
    if weights.is_empty() {
        return Err(LabError::InvalidArgument("no layers".into()));
    }
    let d = weights[0].cols();
    let end_to_end = product(weights);
    if end_to_end.shape() != phi.shape() {
        return Err(LabError::Dimension(format!(
            "target {:?} vs network {:?}",
            phi.shape(),
            end_to_end.shape()
        )));
    }
    let stacked = phi.vstack(&phi.t_matmul(&end_to_end));
    let v1 = nullspace(&stacked, NULL_TOL)?;
    let r = if phi.max_abs() == 0.0 { 0 } else { numerical_rank(phi, NULL_TOL)? };
    let needed = d.saturating_sub(2 * r);
    if v1.cols() < needed {
        return Err(LabError::Singular(format!(
            "null intersection has {} columns, expected at least {needed}",
            v1.cols()
        )));
    }
    Ok(v1)
}

/// Invariant bases for every layer whose block is preserved: all layers for a
/// square target, layers `1..L-1` for a wide one.
#[derive(Clone, Debug)]
pub struct InvariantBases {
    /// Right basis of each tracked layer (`v[l+1] = u[l]`).
    pub v: Vec<Matrix>,
    /// Left basis of each tracked layer.
    pub u: Vec<Matrix>,
    /// Window length `d − 2r` for the full-spectrum spread.
    pub window: usize,
    /// Wide target: the last layer is untracked and `ρ_l` decays only by `(1 − ηλ)`.
    pub wide: bool,
    /// Block value of each tracked layer at construction time.
    pub rho0: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerMeasure {
    pub layer: usize,
    pub singular_values: Vec<f64>,
    /// Smallest `max − min` over any `window` consecutive singular values.
    pub spread: f64,
    /// Spread of the singular values of `U_lᵀ W_l V_l`.
    pub block_spread: f64,
    pub block_mean: f64,
    pub angle_left: f64,
    pub angle_right: f64,
    /// Angle between this layer's current left block and the next layer's right block.
    pub align: Option<f64>,
}

impl InvariantBases {
    pub fn construct(phi: &Matrix, weights: &[Matrix], r: usize) -> Result<Self> {
        let depth = weights.len();
        let d = weights[0].cols();
        for (l, w) in weights.iter().enumerate() {
            let square = w.shape() == (d, d);
            if !square && l + 1 < depth {
                return Err(LabError::Dimension(format!("hidden layer {} is not {d}x{d}", l + 1)));
            }
        }
        let wide = phi.rows() < d;
        let tracked = if wide { depth - 1 } else { depth };
        let v1 = intersection(phi, weights)?;
        if v1.cols() == 0 {
            return Err(LabError::InvalidArgument(
                "no invariant block: the target leaves no common null direction".into(),
            ));
        }
        let mut v = vec![v1];
        let mut u = Vec::with_capacity(tracked);
        let mut rho0 = Vec::with_capacity(tracked);
        for l in 0..tracked {
            let image = weights[l].matmul(&v[l]);
            let ul = orthonormalize(&image)?;
            let block = ul.t_matmul(&image);
            let s = svd(&block)?.s;
            rho0.push(s.iter().sum::<f64>() / s.len() as f64);
            u.push(ul.clone());
            if l + 1 < tracked {
                v.push(ul);
            }
        }
        Ok(Self {
            v,
            u,
            window: d.saturating_sub(2 * r).max(1),
            wide,
            rho0,
        })
    }

    pub fn tracked_layers(&self) -> usize {
        self.u.len()
    }

    pub fn block_dim(&self) -> usize {
        self.v[0].cols()
    }

    pub fn measure(&self, weights: &[Matrix]) -> Result<Vec<LayerMeasure>> {
        let mut out = Vec::with_capacity(self.tracked_layers());
        let mut lefts = Vec::with_capacity(self.tracked_layers());
        let mut rights = Vec::with_capacity(self.tracked_layers());
        for l in 0..self.tracked_layers() {
            let w = &weights[l];
            let sv = svd(w)?.s;
            let image = w.matmul(&self.v[l]);
            let block = self.u[l].t_matmul(&image);
            let bs = svd(&block)?.s;
            let left = orthonormalize(&image)?;
            let right = orthonormalize(&w.t_matmul(&self.u[l]))?;
            out.push(LayerMeasure {
                layer: l + 1,
                spread: window_spread(&sv, self.window),
                singular_values: sv,
                block_spread: bs[0] - bs[bs.len() - 1],
                block_mean: bs.iter().sum::<f64>() / bs.len() as f64,
                angle_left: max_principal_angle(&left, &self.u[l])?,
                angle_right: max_principal_angle(&right, &self.v[l])?,
                align: None,
            });
            lefts.push(left);
            rights.push(right);
        }
        for l in 0..self.tracked_layers().saturating_sub(1) {
            out[l].align = Some(max_principal_angle(&lefts[l], &rights[l + 1])?);
        }
        Ok(out)
    }

    /// Advances the per-layer block values by one gradient step:
    /// `ρ_l ← ρ_l (1 − ηλ − η ∏_{k≠l} ρ_k²)`, or `ρ_l ← ρ_l (1 − ηλ)` for a wide target.
    pub fn advance(&self, rho: &mut [f64], eta: f64, lambda: f64) {
        if self.wide {
            for x in rho.iter_mut() {
                *x *= 1.0 - eta * lambda;
            }
            return;
        }
        let old = rho.to_vec();
        for (l, x) in rho.iter_mut().enumerate() {
            let others: f64 = old
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != l)
                .map(|(_, v)| v * v)
                .product();
            *x = old[l] * (1.0 - eta * lambda - eta * others);
        }
    }
}

fn window_spread(sv: &[f64], window: usize) -> f64 {
    if window <= 1 || sv.len() < window {
        return 0.0;
    }
    sv.windows(window)
        .map(|w| w[0] - w[window - 1])
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyTolerances {
    pub spread: f64,
    pub angle: f64,
    pub align: f64,
    pub recursion: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self {
            spread: 1e-8,
            angle: 1e-6,
            align: 1e-5,
            recursion: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    /// `(iteration, per-layer measurements)` for each snapshot.
    pub measures: Vec<(usize, Vec<LayerMeasure>)>,
    /// Simulated block values at each snapshot, per tracked layer.
    pub predicted: Vec<Vec<f64>>,
    pub block_dim: usize,
    pub max_spread: f64,
    pub max_block_spread: f64,
    pub max_angle_left: f64,
    pub max_angle_right: f64,
    pub max_align: f64,
    /// Largest `|measured − recursion|`.
    pub max_recursion_gap: f64,
    /// Largest `|measured − ε_l (1 − ηλ)^t|`.
    pub max_closed_form_gap: f64,
    pub wide: bool,
    pub tolerances: VerifyTolerances,
}

impl VerificationReport {
    pub fn checks(&self, prefix: &str) -> Vec<Check> {
        let t = self.tolerances;
        let mut c = vec![
            Check::at_most(format!("{prefix}repeated_value_spread"), self.max_spread, t.spread),
            Check::at_most(format!("{prefix}block_value_spread"), self.max_block_spread, t.spread),
            Check::at_most(format!("{prefix}left_subspace_angle"), self.max_angle_left, t.angle),
            Check::at_most(format!("{prefix}right_subspace_angle"), self.max_angle_right, t.angle),
            Check::at_most(format!("{prefix}cross_layer_alignment"), self.max_align, t.align),
            Check::at_most(format!("{prefix}rho_recursion"), self.max_recursion_gap, t.recursion),
        ];
        if self.wide {
            c.push(Check::at_most(
                format!("{prefix}rho_closed_form"),
                self.max_closed_form_gap,
                t.recursion,
            ));
        }
        c
    }

    pub fn passed(&self) -> bool {
        self.checks("").iter().all(|c| c.pass)
    }
}

/// Checks the invariant-subspace structure along a recorded trajectory.
///
/// `snapshots[0]` must be the initial weights (iteration 0). The block value
/// recursion is simulated step by step from the initial scales `eps`.
pub fn verify_invariant_subspaces(
    snapshots: &[Snapshot],
    phi: &Matrix,
    r: usize,
    eps: &[f64],
    eta: f64,
    lambda: f64,
    tolerances: VerifyTolerances,
) -> Result<VerificationReport> {
    let first = snapshots
        .first()
        .ok_or_else(|| LabError::InvalidArgument("no snapshots".into()))?;
    if first.iter != 0 {
        return Err(LabError::InvalidArgument("first snapshot must be iteration 0".into()));
    }
    if eps.len() != first.weights.len() {
        return Err(LabError::Dimension(format!(
            "{} init scales for {} layers",
            eps.len(),
            first.weights.len()
        )));
    }
    let bases = InvariantBases::construct(phi, &first.weights, r)?;
    let tracked = bases.tracked_layers();
    let mut rho = if bases.wide { eps[..tracked].to_vec() } else { eps.to_vec() };
    let mut t = 0;

    let mut report = VerificationReport {
        measures: Vec::with_capacity(snapshots.len()),
        predicted: Vec::with_capacity(snapshots.len()),
        block_dim: bases.block_dim(),
        max_spread: 0.0,
        max_block_spread: 0.0,
        max_angle_left: 0.0,
        max_angle_right: 0.0,
        max_align: 0.0,
        max_recursion_gap: 0.0,
        max_closed_form_gap: 0.0,
        wide: bases.wide,
        tolerances,
    };
    for snap in snapshots {
        if snap.iter < t {
            return Err(LabError::InvalidArgument("snapshots must be in increasing order".into()));
        }
        while t < snap.iter {
            bases.advance(&mut rho, eta, lambda);
            t += 1;
        }
        let m = bases.measure(&snap.weights)?;
        let decay = (1.0 - eta * lambda).powi(t as i32);
        for (l, lm) in m.iter().enumerate() {
            report.max_spread = report.max_spread.max(lm.spread);
            report.max_block_spread = report.max_block_spread.max(lm.block_spread);
            report.max_angle_left = report.max_angle_left.max(lm.angle_left);
            report.max_angle_right = report.max_angle_right.max(lm.angle_right);
            if let Some(a) = lm.align {
                report.max_align = report.max_align.max(a);
            }
            report.max_recursion_gap = report.max_recursion_gap.max((lm.block_mean - rho[l]).abs());
            report.max_closed_form_gap =
                report.max_closed_form_gap.max((lm.block_mean - eps[l] * decay).abs());
        }
        report.predicted.push(rho[..tracked].to_vec());
        report.measures.push((snap.iter, m));
    }
    Ok(report)
}
