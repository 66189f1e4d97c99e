//! Synthetic tasks shared by `run` and the verification suites.

use crate::error::{LabError, Result};
use crate::linalg::{orthonormalize, Matrix, Rng};

/// Adapter fine-tuning task: a random base and a target that differs from it
/// by a rank-`update_rank` update plus small full-rank noise.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterTask {
    pub base: Matrix,
    pub target: Matrix,
    /// The clean low-rank part of `target − base`.
    pub update: Matrix,
}

pub const ADAPTER_NOISE: f64 = 0.08;

/// Update singular values run linearly from 1.5 down to 1.0.
pub fn adapter_task(d: usize, update_rank: usize, noise: f64, rng: &mut Rng) -> Result<AdapterTask> {
    if update_rank == 0 || update_rank > d {
        return Err(LabError::InvalidArgument(format!("update rank {update_rank} out of 1..={d}")));
    }
    let base = rng.gaussian_matrix(d, d, (1.0 / d as f64).sqrt());
    let u = orthonormalize(&rng.gaussian_matrix(d, update_rank, 1.0))?;
    let v = orthonormalize(&rng.gaussian_matrix(d, update_rank, 1.0))?;
    let sigma: Vec<f64> = (0..update_rank)
        .map(|i| if update_rank == 1 { 1.5 } else { 1.5 - 0.5 * i as f64 / (update_rank - 1) as f64 })
        .collect();
    let update = u.matmul(&Matrix::diag(&sigma)).matmul_t(&v);
    let mut target = &base + &update;
    if noise > 0.0 {
        target.add_scaled(1.0, &rng.gaussian_matrix(d, d, noise / (d as f64).sqrt()));
    }
    Ok(AdapterTask { base, target, update })
}
