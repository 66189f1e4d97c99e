//! Deep linear networks and small MLPs with hand-written gradients.

mod gradcheck;
mod invariant;
mod mlp;
mod train;

pub use gradcheck::{
    dln_gradient_error, finite_difference_error, min_preactivation, mlp_gradient_error, FD_STEP,
};
pub use invariant::{
    construct_null_intersection, verify_invariant_subspaces, InvariantBases, LayerMeasure,
    VerificationReport, VerifyTolerances,
};
pub use mlp::{
    dropout_rank_experiment, mlp_forward_backward, sample_masks, DropoutRankConfig,
    DropoutRankOutcome, Loss, MlpPass,
};
pub use train::{train_gd, Snapshot, SpectrumTrace, TraceKind, TraceRow, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{numerical_rank, random_scaled_orthogonal, Matrix, Rng, DEFAULT_RANK_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// `x ↦ W_L σ(W_{L-1} σ(⋯ σ(W_1 x)))`, with `W_l` of shape `d_l x d_{l-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepLinearNet {
    weights: Vec<Matrix>,
    activation: Activation,
    dropout_keep: Option<f64>,
}

impl DeepLinearNet {
    pub fn new(weights: Vec<Matrix>, activation: Activation) -> Result<Self> {
        if weights.is_empty() {
            return Err(LabError::InvalidArgument("network needs at least one layer".into()));
        }
        for (l, pair) in weights.windows(2).enumerate() {
            if pair[1].cols() != pair[0].rows() {
                return Err(LabError::Dimension(format!(
                    "layer {} has {} inputs but layer {} has {} outputs",
                    l + 2,
                    pair[1].cols(),
                    l + 1,
                    pair[0].rows()
                )));
            }
        }
        for w in &weights {
            w.ensure_finite("network weights")?;
        }
        Ok(Self {
            weights,
            activation,
            dropout_keep: None,
        })
    }

    pub fn linear(weights: Vec<Matrix>) -> Result<Self> {
        Self::new(weights, Activation::Identity)
    }

    pub fn with_dropout(mut self, keep: f64) -> Result<Self> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(LabError::InvalidArgument(format!(
                "dropout keep probability must lie in (0, 1], got {keep}"
            )));
        }
        self.dropout_keep = Some(keep);
        Ok(self)
    }

    /// Square `d x d` layers, each `eps_l` times a random orthogonal matrix. With
    /// `out_rows < d` the last layer keeps only its first `out_rows` rows.
    pub fn scaled_orthogonal(d: usize, out_rows: usize, eps: &[f64], rng: &mut Rng) -> Result<Self> {
        if eps.is_empty() || d == 0 || out_rows == 0 || out_rows > d {
            return Err(LabError::InvalidArgument(format!(
                "bad orthogonal init: d={d}, out_rows={out_rows}, depth={}",
                eps.len()
            )));
        }
        if eps.iter().any(|&e| !(e > 0.0)) {
            return Err(LabError::InvalidArgument("init scales must be positive".into()));
        }
        let last = eps.len() - 1;
        let weights = eps
            .iter()
            .enumerate()
            .map(|(l, &e)| {
                let w = random_scaled_orthogonal(d, e, rng);
                if l == last && out_rows < d {
                    w.row_range(0, out_rows)
                } else {
                    w
                }
            })
            .collect();
        Self::linear(weights)
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn into_weights(self) -> Vec<Matrix> {
        self.weights
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn dropout_keep(&self) -> Option<f64> {
        self.dropout_keep
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.depth() - 1].rows()
    }

    /// `W_L ⋯ W_1`, ignoring the activation.
    pub fn end_to_end(&self) -> Matrix {
        product(&self.weights)
    }

    /// Deterministic forward pass (no dropout masks).
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.input_dim() {
            return Err(LabError::Dimension(format!(
                "input has {} rows, network expects {}",
                x.rows(),
                self.input_dim()
            )));
        }
        let mut h = x.clone();
        let last = self.depth() - 1;
        for (l, w) in self.weights.iter().enumerate() {
            h = w.matmul(&h);
            if l < last {
                h = h.map(|v| self.activation.apply(v));
            }
        }
        Ok(h)
    }

    fn require_linear(&self, what: &str) -> Result<()> {
        if self.activation != Activation::Identity {
            return Err(LabError::InvalidArgument(format!("{what} needs identity activation")));
        }
        Ok(())
    }
}

/// Product `ws[n-1] ⋯ ws[0]` of a non-empty chain.
pub fn product(ws: &[Matrix]) -> Matrix {
    let mut p = ws[0].clone();
    for w in &ws[1..] {
        p = w.matmul(&p);
    }
    p
}

fn check_target(net: &DeepLinearNet, phi: &Matrix) -> Result<()> {
    net.require_linear("deep linear loss")?;
    if phi.shape() != (net.output_dim(), net.input_dim()) {
        return Err(LabError::Dimension(format!(
            "target is {:?} but the network maps {} -> {}",
            phi.shape(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    Ok(())
}

/// `½‖W_L⋯W_1 − Φ‖_F²`. Weight decay is not part of the loss.
pub fn dln_loss(net: &DeepLinearNet, phi: &Matrix) -> Result<f64> {
    check_target(net, phi)?;
    Ok(0.5 * (&net.end_to_end() - phi).frobenius_norm_sq())
}

/// Gradient of [`dln_loss`] for every layer:
/// `(W_L⋯W_{l+1})ᵀ (W_L⋯W_1 − Φ) (W_{l-1}⋯W_1)ᵀ`.
pub fn dln_gradients(net: &DeepLinearNet, phi: &Matrix) -> Result<Vec<Matrix>> {
    check_target(net, phi)?;
    let residual = &net.end_to_end() - phi;
    Ok(chain_gradients(net.weights(), &residual))
}

/// Per-layer gradients of any loss of the end-to-end product, given the
/// gradient `upstream` with respect to `W_L⋯W_1`.
pub fn chain_gradients(ws: &[Matrix], upstream: &Matrix) -> Vec<Matrix> {
    let depth = ws.len();
    // prefix[l] = W_l ⋯ W_1 (prefix[0] = I)
    let mut prefix = Vec::with_capacity(depth);
    prefix.push(Matrix::identity(ws[0].cols()));
    for w in &ws[..depth - 1] {
        let next = w.matmul(prefix.last().unwrap());
        prefix.push(next);
    }
    // back = (W_L ⋯ W_{l+1})ᵀ G, built from the top down
    let mut back = upstream.clone();
    let mut grads = vec![Matrix::zeros(0, 0); depth];
    for l in (0..depth).rev() {
        grads[l] = back.matmul_t(&prefix[l]);
        if l > 0 {
            back = ws[l].t_matmul(&back);
        }
    }
    grads
}

/// Synthetic rank-`r` target `Φ = G₁G₂ / √(k·d)` with Gaussian `G₁` (`k x r`) and `G₂` (`r x d`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub d: usize,
    pub k: usize,
    pub r: usize,
    pub seed: u64,
}

impl TargetSpec {
    pub fn square(d: usize, r: usize, seed: u64) -> Self {
        Self { d, k: d, r, seed }
    }

    pub fn generate(&self) -> Result<Matrix> {
        let TargetSpec { d, k, r, seed } = *self;
        if d == 0 || k == 0 || k > d {
            return Err(LabError::InvalidArgument(format!("target needs 1 <= k <= d, got k={k}, d={d}")));
        }
        if r == 0 {
            return Ok(Matrix::zeros(k, d));
        }
        if r > k.min(d) {
            return Err(LabError::InvalidArgument(format!("target rank {r} exceeds min(k, d)")));
        }
        let mut rng = Rng::new(seed);
        let g1 = rng.gaussian_matrix(k, r, 1.0);
        let g2 = rng.gaussian_matrix(r, d, 1.0);
        let phi = g1.matmul(&g2).scale(1.0 / ((k * d) as f64).sqrt());
        let rank = numerical_rank(&phi, DEFAULT_RANK_TOL)?;
        if rank != r {
            return Err(LabError::Singular(format!("generated target has rank {rank}, wanted {r}")));
        }
        Ok(phi)
    }
}
