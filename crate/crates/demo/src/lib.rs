//! wasm-bindgen entry points for the static page in `www/`.
//!
//! Every export returns a JSON string; errors come back as `{"error": "..."}`.

use lowrank_lab::linalg::{Matrix, Rng};
use lowrank_lab::network::TraceKind;
use lowrank_lab::optim::{verify_galore_relora_equivalence, InnerMode, QuadraticProblem, Reinit};
use lowrank_lab::regeq::{nuclear_prox, squared_nuclear_shrink};
use lowrank_lab::runner::{run_experiment, ExperimentConfig, ExperimentKind};
use lowrank_lab::Result;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_DIM: usize = 48;
const MAX_STEPS: usize = 5000;

fn respond(r: Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn bounded(name: &str, v: usize, hi: usize) -> Result<usize> {
    if v == 0 || v > hi {
        return Err(lowrank_lab::LabError::InvalidArgument(format!("{name} must lie in 1..={hi}, got {v}")));
    }
    Ok(v)
}

/// Trains a square deep linear net on a rank-`r` target and returns the
/// first layer's singular values at each recorded step.
#[wasm_bindgen]
pub fn dln_spectrum(d: usize, r: usize, depth: usize, steps: usize, seed: u64) -> String {
    respond((|| {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::DlnDynamics);
        cfg.d = bounded("d", d, MAX_DIM)?;
        cfg.k = d;
        cfg.r = r;
        cfg.depth = depth;
        cfg.steps = bounded("steps", steps, MAX_STEPS)?;
        cfg.record_every = (steps / 50).max(1);
        cfg.seed = seed;
        let out = run_experiment(&cfg)?;
        let iters = out.trace.iterations();
        let values: Vec<Vec<f64>> = iters.iter().map(|&t| out.trace.series(1, t, TraceKind::Sv)).collect();
        let passed = out.checks.iter().filter(|c| c.pass).count();
        Ok(json!({
            "iters": iters,
            "values": values,
            "checks_passed": passed,
            "checks_total": out.checks.len(),
        }))
    })())
}

/// Shrinks the comma-separated spectrum `values` with the nuclear prox at
/// strength `lambda` and the squared-nuclear prox at strength `c`.
#[wasm_bindgen]
pub fn shrinkage_curve(values: &str, lambda: f64, c: f64) -> String {
    respond((|| {
        let mut s = values
            .split(',')
            .filter(|v| !v.trim().is_empty())
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite() && *x >= 0.0)
                    .ok_or_else(|| lowrank_lab::LabError::InvalidArgument(format!("bad singular value {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if s.is_empty() || s.len() > MAX_DIM {
            return Err(lowrank_lab::LabError::InvalidArgument("need 1 to 48 values".into()));
        }
        if !(c >= 0.0) {
            return Err(lowrank_lab::LabError::InvalidArgument(format!("c must be non-negative, got {c}")));
        }
        s.sort_by(|a, b| b.total_cmp(a));
        let diag = Matrix::diag(&s);
        let soft = nuclear_prox(&diag, lambda)?;
        let nuclear: Vec<f64> = (0..s.len()).map(|i| soft[(i, i)]).collect();
        let squared = squared_nuclear_shrink(&s, c);
        Ok(json!({ "input": s, "nuclear": nuclear, "squared_nuclear": squared }))
    })())
}

/// Runs GaLore and ReLoRA side by side on a random quadratic and reports
/// how far apart their iterates drift. `random_reset` swaps the
/// gradient-SVD reset for a random one.
#[wasm_bindgen]
pub fn galore_relora(d: usize, rank: usize, period: usize, steps: usize, seed: u64, random_reset: bool) -> String {
    respond((|| {
        let d = bounded("d", d, MAX_DIM)?;
        let steps = bounded("steps", steps, MAX_STEPS)?;
        let mut rng = Rng::new(seed);
        let p = QuadraticProblem::random(d, d, &mut rng);
        let reinit = if random_reset { Reinit::Random(rng.split()) } else { Reinit::GradientSvd };
        let eta = p.safe_step()?;
        let rep = verify_galore_relora_equivalence(&p, rank, period, eta, steps, InnerMode::Gd, reinit)?;
        Ok(json!({
            "max_deviation": rep.max_deviation,
            "max_angle": rep.max_angle,
            "scale": rep.scale,
            "steps": rep.steps,
        }))
    })())
}
