//! Central finite differences against the hand-written gradients.

use crate::error::{LabError, Result};
use crate::linalg::Matrix;

use super::{dln_gradients, dln_loss, mlp_forward_backward, DeepLinearNet, Loss};

pub const FD_STEP: f64 = 1e-6;

/// `‖g_fd − g‖ / max(‖g_fd‖, ‖g‖)` over all layers, with central differences
/// of step `h` on every weight entry.
pub fn finite_difference_error(
    net: &DeepLinearNet,
    analytic: &[Matrix],
    h: f64,
    mut loss: impl FnMut(&DeepLinearNet) -> Result<f64>,
) -> Result<f64> {
    if analytic.len() != net.depth() {
        return Err(LabError::Dimension(format!("{} gradients for {} layers", analytic.len(), net.depth())));
    }
    let mut probe = net.clone();
    let mut diff = 0.0;
    let mut norm_fd = 0.0;
    let mut norm_an = 0.0;
    for (l, g) in analytic.iter().enumerate() {
        let (rows, cols) = g.shape();
        for i in 0..rows {
            for j in 0..cols {
                let orig = probe.weights()[l][(i, j)];
                probe.weights_mut()[l][(i, j)] = orig + h;
                let up = loss(&probe)?;
                probe.weights_mut()[l][(i, j)] = orig - h;
                let down = loss(&probe)?;
                probe.weights_mut()[l][(i, j)] = orig;
                let fd = (up - down) / (2.0 * h);
                diff += (fd - g[(i, j)]).powi(2);
                norm_fd += fd * fd;
                norm_an += g[(i, j)].powi(2);
            }
        }
    }
    let denom = norm_fd.max(norm_an).sqrt();
    Ok(if denom == 0.0 { diff.sqrt() } else { diff.sqrt() / denom })
}

pub fn dln_gradient_error(net: &DeepLinearNet, phi: &Matrix) -> Result<f64> {
    let g = dln_gradients(net, phi)?;
    finite_difference_error(net, &g, FD_STEP, |n| dln_loss(n, phi))
}

pub fn mlp_gradient_error(net: &DeepLinearNet, x: &Matrix, y: &Matrix, loss: Loss) -> Result<f64> {
    let g = mlp_forward_backward(net, x, y, loss, None)?.gradients;
    finite_difference_error(net, &g, FD_STEP, |n| Ok(mlp_forward_backward(n, x, y, loss, None)?.loss))
}

/// Smallest `|pre-activation|` over all hidden units and samples. Entries
/// closer to zero than the perturbation reach can cross a ReLU kink.
pub fn min_preactivation(net: &DeepLinearNet, x: &Matrix) -> f64 {
    let ws = net.weights();
    let mut h = x.clone();
    let mut min = f64::INFINITY;
    for w in &ws[..ws.len() - 1] {
        let z = w.matmul(&h);
        min = z.data().iter().fold(min, |m, v| m.min(v.abs()));
        h = z.map(|v| net.activation().apply(v));
    }
    min
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;
    use crate::network::Activation;

    #[test]
    fn deep_linear_gradients_agree() {
        let mut rng = Rng::new(3);
        let ws = vec![rng.gaussian_matrix(4, 3, 0.5), rng.gaussian_matrix(2, 4, 0.5)];
        let net = DeepLinearNet::linear(ws).unwrap();
        let phi = rng.gaussian_matrix(2, 3, 1.0);
        assert!(dln_gradient_error(&net, &phi).unwrap() < 1e-8);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let net = DeepLinearNet::linear(vec![Matrix::identity(2)]).unwrap();
        let phi = Matrix::diag(&[2.0, 0.0]);
        let zero = vec![Matrix::zeros(2, 2)];
        let err = finite_difference_error(&net, &zero, FD_STEP, |n| dln_loss(n, &phi)).unwrap();
        assert!((err - 1.0).abs() < 1e-6);
    }

    #[test]
    fn relu_mlp_gradients_agree() {
        let mut rng = Rng::new(4);
        let ws = vec![rng.gaussian_matrix(5, 3, 0.7), rng.gaussian_matrix(2, 5, 0.7)];
        let net = DeepLinearNet::new(ws, Activation::Relu).unwrap();
        let x = rng.gaussian_matrix(3, 6, 1.0);
        let y = rng.gaussian_matrix(2, 6, 1.0);
        assert!(min_preactivation(&net, &x) > 1e-4);
        assert!(mlp_gradient_error(&net, &x, &y, Loss::Mse).unwrap() < 1e-6);
    }
}
