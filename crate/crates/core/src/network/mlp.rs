//! Forward/backward passes for small MLPs with optional dropout masks, and the
//! dropout activation-rank experiment built on them.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{numerical_rank, svd, Matrix, Rng, DEFAULT_RANK_TOL};

use super::train::{SpectrumTrace, TraceKind};
use super::{Activation, DeepLinearNet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `½ Σ (output − y)²` over all entries.
    Mse,
    /// Softmax cross-entropy summed over columns; `y` holds one-hot columns.
    CrossEntropy,
}

#[derive(Clone, Debug)]
pub struct MlpPass {
    pub loss: f64,
    pub gradients: Vec<Matrix>,
    /// Hidden activations after the nonlinearity and any mask, one per hidden layer.
    pub activations: Vec<Matrix>,
    pub output: Matrix,
}

/// Bernoulli(`keep`) 0/1 masks shaped like each hidden activation for a batch of `n` columns.
pub fn sample_masks(net: &DeepLinearNet, n: usize, rng: &mut Rng) -> Result<Vec<Matrix>> {
    let keep = net.dropout_keep().unwrap_or(1.0);
    let hidden = &net.weights()[..net.depth() - 1];
    Ok(hidden
        .iter()
        .map(|w| Matrix::from_fn(w.rows(), n, |_, _| if rng.bernoulli(keep) { 1.0 } else { 0.0 }))
        .collect())
}

/// Loss, per-layer gradients and hidden activations for a batch of column samples.
///
/// Masks multiply each hidden activation elementwise, rescaled by `1/μ` where
/// `μ` is the network's keep probability.
pub fn mlp_forward_backward(
    net: &DeepLinearNet,
    x: &Matrix,
    y: &Matrix,
    loss: Loss,
    masks: Option<&[Matrix]>,
) -> Result<MlpPass> {
    let depth = net.depth();
    let ws = net.weights();
    if x.rows() != net.input_dim() || y.rows() != net.output_dim() || x.cols() != y.cols() {
        return Err(LabError::Dimension(format!(
            "x {:?} and y {:?} do not fit a {} -> {} network",
            x.shape(),
            y.shape(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    let keep = net.dropout_keep().unwrap_or(1.0);
    if let Some(m) = masks {
        if m.len() != depth - 1 {
            return Err(LabError::Dimension(format!("{} masks for {} hidden layers", m.len(), depth - 1)));
        }
        for (l, mask) in m.iter().enumerate() {
            if mask.shape() != (ws[l].rows(), x.cols()) {
                return Err(LabError::Dimension(format!("mask {} has shape {:?}", l + 1, mask.shape())));
            }
        }
    }
    let act = net.activation();

    let mut inputs = Vec::with_capacity(depth);
    let mut pre = Vec::with_capacity(depth - 1);
    let mut h = x.clone();
    for l in 0..depth - 1 {
        let z = ws[l].matmul(&h);
        let mut a = z.map(|v| act.apply(v));
        if let Some(m) = masks {
            a = a.zip_map(&m[l], |v, k| v * k / keep);
        }
        inputs.push(h);
        pre.push(z);
        h = a;
    }
    let output = ws[depth - 1].matmul(&h);
    inputs.push(h);

    let (value, mut delta) = match loss {
        Loss::Mse => {
            let r = &output - y;
            (0.5 * r.frobenius_norm_sq(), r)
        }
        Loss::CrossEntropy => cross_entropy(&output, y),
    };

    let mut grads = vec![Matrix::zeros(0, 0); depth];
    for l in (0..depth).rev() {
        grads[l] = delta.matmul_t(&inputs[l]);
        if l > 0 {
            let mut back = ws[l].t_matmul(&delta);
            if let Some(m) = masks {
                back = back.zip_map(&m[l - 1], |v, k| v * k / keep);
            }
            delta = back.zip_map(&pre[l - 1], |v, z| v * act.derivative(z));
        }
    }
    let activations = inputs.split_off(1);
    Ok(MlpPass {
        loss: value,
        gradients: grads,
        activations,
        output,
    })
}

fn cross_entropy(logits: &Matrix, y: &Matrix) -> (f64, Matrix) {
    let (k, n) = logits.shape();
    let mut grad = Matrix::zeros(k, n);
    let mut total = 0.0;
    for j in 0..n {
        let max = (0..k).map(|i| logits[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..k).map(|i| (logits[(i, j)] - max).exp()).sum();
        let log_z = z.ln() + max;
        let mass: f64 = (0..k).map(|i| y[(i, j)]).sum();
        for i in 0..k {
            let p = (logits[(i, j)] - log_z).exp();
            total -= y[(i, j)] * (logits[(i, j)] - log_z);
            grad[(i, j)] = p * mass - y[(i, j)];
        }
    }
    (total, grad)
}

/// Synthetic regression `y = M x` with rank-deficient `M`, trained by a ReLU
/// MLP under dropout. Tracks the numerical rank of the last hidden activations
/// (evaluated without masks).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutRankConfig {
    pub d: usize,
    pub target_rank: usize,
    pub samples: usize,
    pub depth: usize,
    pub keep: f64,
    pub eta: f64,
    pub steps: usize,
    pub record_every: usize,
    pub rank_tol: f64,
    pub seed: u64,
}

impl Default for DropoutRankConfig {
    fn default() -> Self {
        Self {
            d: 20,
            target_rank: 15,
            samples: 256,
            depth: 3,
            keep: 0.4,
            eta: 0.01,
            steps: 2000,
            record_every: 250,
            rank_tol: DEFAULT_RANK_TOL,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DropoutRankOutcome {
    /// `(iteration, numerical rank)` at each checkpoint.
    pub checkpoints: Vec<(usize, usize)>,
    pub trace: SpectrumTrace,
    pub final_loss: f64,
}

impl DropoutRankOutcome {
    pub fn initial_rank(&self) -> usize {
        self.checkpoints[0].1
    }

    pub fn final_rank(&self) -> usize {
        self.checkpoints[self.checkpoints.len() - 1].1
    }
}

pub fn dropout_rank_experiment(cfg: &DropoutRankConfig) -> Result<DropoutRankOutcome> {
    let DropoutRankConfig {
        d,
        target_rank,
        samples: n,
        depth,
        keep,
        eta,
        steps,
        record_every,
        rank_tol,
        seed,
    } = *cfg;
    if d == 0 || n == 0 || depth < 2 || target_rank == 0 || target_rank > d || record_every == 0 {
        return Err(LabError::InvalidArgument(format!("bad dropout experiment config {cfg:?}")));
    }
    if !(eta > 0.0) {
        return Err(LabError::InvalidArgument("eta must be positive".into()));
    }
    let mut rng = Rng::new(seed);
    let a = rng.gaussian_matrix(d, target_rank, 1.0);
    let b = rng.gaussian_matrix(target_rank, d, 1.0);
    let m = a.matmul(&b).scale(1.0 / ((target_rank * d) as f64).sqrt());
    let x = rng.gaussian_matrix(d, n, 1.0);
    let y = m.matmul(&x);
    let he = (2.0 / d as f64).sqrt();
    let weights = (0..depth).map(|_| rng.gaussian_matrix(d, d, he)).collect();
    let mut net = DeepLinearNet::new(weights, Activation::Relu)?.with_dropout(keep)?;

    let mut out = DropoutRankOutcome {
        checkpoints: Vec::new(),
        trace: SpectrumTrace::default(),
        final_loss: 0.0,
    };
    let inv_n = 1.0 / n as f64;
    for t in 0..=steps {
        if t % record_every == 0 || t == steps {
            let clean = mlp_forward_backward(&net.clone_without_dropout(), &x, &y, Loss::Mse, None)?;
            let last = clean.activations.last().expect("hidden layer");
            let s = svd(last)?.s;
            out.trace.push_values(depth - 1, t, TraceKind::ActSv, &s);
            let rank = if s[0] == 0.0 { 0 } else { numerical_rank(last, rank_tol)? };
            out.checkpoints.push((t, rank));
            out.final_loss = clean.loss * inv_n;
        }
        if t == steps {
            break;
        }
        let masks = sample_masks(&net, n, &mut rng)?;
        let pass = mlp_forward_backward(&net, &x, &y, Loss::Mse, Some(&masks))?;
        if !pass.loss.is_finite() {
            return Err(LabError::Divergence(format!("non-finite loss at step {t}")));
        }
        for (w, g) in net.weights_mut().iter_mut().zip(&pass.gradients) {
            w.add_scaled(-eta * inv_n, g);
        }
    }
    Ok(out)
}

impl DeepLinearNet {
    fn clone_without_dropout(&self) -> DeepLinearNet {
        let mut c = self.clone();
        c.dropout_keep = None;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{dln_gradients, TargetSpec};

    #[test]
    fn identity_mse_matches_linear_path() {
        let mut rng = Rng::new(1);
        let net = DeepLinearNet::scaled_orthogonal(5, 5, &[1.0, 0.8, 1.2], &mut rng).unwrap();
        let phi = TargetSpec::square(5, 2, 3).generate().unwrap();
        let pass = mlp_forward_backward(&net, &Matrix::identity(5), &phi, Loss::Mse, None).unwrap();
        let reference = dln_gradients(&net, &phi).unwrap();
        for (a, b) in pass.gradients.iter().zip(&reference) {
            assert!((a - b).max_abs() < 1e-10);
        }
    }

    #[test]
    fn all_ones_masks_are_a_no_op() {
        let mut rng = Rng::new(2);
        let ws = vec![rng.gaussian_matrix(4, 3, 1.0), rng.gaussian_matrix(2, 4, 1.0)];
        let net = DeepLinearNet::new(ws, Activation::Relu).unwrap().with_dropout(1.0).unwrap();
        let x = rng.gaussian_matrix(3, 6, 1.0);
        let y = rng.gaussian_matrix(2, 6, 1.0);
        let ones = vec![Matrix::from_fn(4, 6, |_, _| 1.0)];
        let a = mlp_forward_backward(&net, &x, &y, Loss::Mse, None).unwrap();
        let b = mlp_forward_backward(&net, &x, &y, Loss::Mse, Some(&ones)).unwrap();
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.gradients, b.gradients);
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let net = DeepLinearNet::linear(vec![Matrix::zeros(3, 2)]).unwrap();
        let x = Matrix::identity(2);
        let y = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let pass = mlp_forward_backward(&net, &x, &y, Loss::CrossEntropy, None).unwrap();
        assert!((pass.loss - 2.0 * 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn stable_for_huge_logits() {
        let net = DeepLinearNet::linear(vec![Matrix::diag(&[1e4, -1e4])]).unwrap();
        let y = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let pass = mlp_forward_backward(&net, &Matrix::column_vector(&[1.0, 1.0]), &y, Loss::CrossEntropy, None)
            .unwrap();
        assert!(pass.loss.is_finite() && pass.loss.abs() < 1e-12);
    }

    #[test]
    fn mask_shape_is_validated() {
        let net = DeepLinearNet::new(vec![Matrix::identity(2), Matrix::identity(2)], Activation::Relu).unwrap();
        let x = Matrix::identity(2);
        let bad = vec![Matrix::zeros(3, 2)];
        assert!(mlp_forward_backward(&net, &x, &x, Loss::Mse, Some(&bad)).is_err());
        assert!(net.clone().with_dropout(0.0).is_err());
        assert!(net.with_dropout(1.5).is_err());
    }
}
