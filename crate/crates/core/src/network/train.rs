//! Full-batch gradient descent with weight decay and spectrum recording.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{svd, Matrix};

use super::invariant::InvariantBases;
use super::{dln_gradients, dln_loss, DeepLinearNet};

/// Loss above which training is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub lambda: f64,
    pub steps: usize,
    pub record_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            lambda: 0.0,
            steps: 500,
            record_every: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(LabError::InvalidArgument(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(LabError::InvalidArgument(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.record_every == 0 {
            return Err(LabError::InvalidArgument("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Sv,
    AngleLeft,
    AngleRight,
    Align,
    RhoPred,
    ActSv,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Sv => "sv",
            TraceKind::AngleLeft => "angle_left",
            TraceKind::AngleRight => "angle_right",
            TraceKind::Align => "align",
            TraceKind::RhoPred => "rho_pred",
            TraceKind::ActSv => "act_sv",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub layer: usize,
    pub iter: usize,
    pub kind: TraceKind,
    pub index: usize,
    pub value: f64,
}

/// Per-iteration spectra and subspace angles, one row per scalar.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpectrumTrace {
    pub rows: Vec<TraceRow>,
}

impl SpectrumTrace {
    pub fn push(&mut self, layer: usize, iter: usize, kind: TraceKind, index: usize, value: f64) {
        self.rows.push(TraceRow {
            layer,
            iter,
            kind,
            index,
            value,
        });
    }

    pub fn push_values(&mut self, layer: usize, iter: usize, kind: TraceKind, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            self.push(layer, iter, kind, i, v);
        }
    }

    pub fn extend(&mut self, other: SpectrumTrace) {
        self.rows.extend(other.rows);
    }

    /// Recorded iterations, ascending and deduplicated.
    pub fn iterations(&self) -> Vec<usize> {
        let mut it: Vec<usize> = self.rows.iter().map(|r| r.iter).collect();
        it.sort_unstable();
        it.dedup();
        it
    }

    /// Values of one `(layer, iter, kind)` series in index order.
    pub fn series(&self, layer: usize, iter: usize, kind: TraceKind) -> Vec<f64> {
        let mut rows: Vec<&TraceRow> = self
            .rows
            .iter()
            .filter(|r| r.layer == layer && r.iter == iter && r.kind == kind)
            .collect();
        rows.sort_by_key(|r| r.index);
        rows.iter().map(|r| r.value).collect()
    }

    /// CSV with header `layer,iter,kind,index,value`, rows sorted by
    /// `(layer, iter, kind, index)`. Values use Rust's shortest round-trip format.
    pub fn to_csv(&self) -> String {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| {
            (a.layer, a.iter, a.kind, a.index).cmp(&(b.layer, b.iter, b.kind, b.index))
        });
        let mut out = String::from("layer,iter,kind,index,value\n");
        for r in rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.layer, r.iter, r.kind.as_str(), r.index, r.value);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iter: usize,
    pub weights: Vec<Matrix>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: DeepLinearNet,
    pub trace: SpectrumTrace,
    /// Weights at every recorded iteration, starting with iteration 0.
    pub snapshots: Vec<Snapshot>,
    /// `(iteration, loss)` at every recorded iteration.
    pub losses: Vec<(usize, f64)>,
    pub warnings: Vec<String>,
}

impl TrainOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.losses.first().map_or(0.0, |x| x.1)
    }

    pub fn final_loss(&self) -> f64 {
        self.losses.last().map_or(0.0, |x| x.1)
    }
}

/// Runs `W_l ← (1 − ηλ) W_l − η ∇_{W_l}` for `cfg.steps` steps.
///
/// Spectra are recorded at iteration 0, every `record_every` steps, and at the
/// final step. When `track_rank > 0` and an invariant block exists, the trace
/// also carries block angles, cross-layer alignment, and the predicted block
/// value.
pub fn train_gd(
    net: &DeepLinearNet,
    phi: &Matrix,
    cfg: &TrainConfig,
    track_rank: usize,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut current = net.clone();
    let mut loss = dln_loss(&current, phi)?;
    let mut warnings = Vec::new();
    let bases = if track_rank > 0 {
        match InvariantBases::construct(phi, current.weights(), track_rank) {
            Ok(b) => Some(b),
            Err(e) => {
                warnings.push(format!("subspace tracking disabled: {e}"));
                None
            }
        }
    } else {
        None
    };
    let mut rho = bases.as_ref().map(|b| b.rho0.clone()).unwrap_or_default();

    let mut outcome = TrainOutcome {
        net: current.clone(),
        trace: SpectrumTrace::default(),
        snapshots: Vec::new(),
        losses: Vec::new(),
        warnings: Vec::new(),
    };
    record(&mut outcome, &current, 0, loss, bases.as_ref(), &rho)?;

    let shrink = 1.0 - cfg.eta * cfg.lambda;
    for t in 1..=cfg.steps {
        let grads = dln_gradients(&current, phi)?;
        for (w, g) in current.weights_mut().iter_mut().zip(&grads) {
            w.scale_in_place(shrink);
            w.add_scaled(-cfg.eta, g);
        }
        let next = dln_loss(&current, phi)?;
        if !next.is_finite() || next > DIVERGENCE_LOSS {
            return Err(LabError::Divergence(format!("loss {next:e} at step {t}")));
        }
        if t <= 10 && next > loss {
            warnings.push(format!("loss increased at step {t}: {loss:e} -> {next:e}"));
        }
        loss = next;
        if let Some(b) = bases.as_ref() {
            b.advance(&mut rho, cfg.eta, cfg.lambda);
        }
        if t % cfg.record_every == 0 || t == cfg.steps {
            record(&mut outcome, &current, t, loss, bases.as_ref(), &rho)?;
        }
    }
    outcome.net = current;
    outcome.warnings = warnings;
    Ok(outcome)
}

fn record(
    out: &mut TrainOutcome,
    net: &DeepLinearNet,
    iter: usize,
    loss: f64,
    bases: Option<&InvariantBases>,
    rho: &[f64],
) -> Result<()> {
    out.losses.push((iter, loss));
    out.snapshots.push(Snapshot {
        iter,
        weights: net.weights().to_vec(),
    });
    match bases {
        Some(b) => {
            let measures = b.measure(net.weights())?;
            for (l, w) in net.weights().iter().enumerate() {
                let layer = l + 1;
                match measures.get(l) {
                    Some(m) => {
                        out.trace.push_values(layer, iter, TraceKind::Sv, &m.singular_values);
                        out.trace.push(layer, iter, TraceKind::AngleLeft, 0, m.angle_left);
                        out.trace.push(layer, iter, TraceKind::AngleRight, 0, m.angle_right);
                        if let Some(a) = m.align {
                            out.trace.push(layer, iter, TraceKind::Align, 0, a);
                        }
                        out.trace.push(layer, iter, TraceKind::RhoPred, 0, rho[l]);
                    }
                    None => out.trace.push_values(layer, iter, TraceKind::Sv, &svd(w)?.s),
                }
            }
        }
        None => {
            for (l, w) in net.weights().iter().enumerate() {
                out.trace.push_values(l + 1, iter, TraceKind::Sv, &svd(w)?.s);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;
    use crate::network::TargetSpec;

    fn cfg(eta: f64, lambda: f64, steps: usize) -> TrainConfig {
        TrainConfig {
            eta,
            lambda,
            steps,
            record_every: 1,
            seed: 0,
        }
    }

    #[test]
    fn zero_target_step_is_pure_shrinkage() {
        let mut rng = Rng::new(1);
        let net = DeepLinearNet::scaled_orthogonal(5, 5, &[1.0, 1.0], &mut rng).unwrap();
        let out = train_gd(&net, &Matrix::zeros(5, 5), &cfg(0.1, 0.0, 1), 0).unwrap();
        for (new, old) in out.net.weights().iter().zip(net.weights()) {
            assert!((new - &old.scale(0.9)).max_abs() < 1e-15);
        }
    }

    #[test]
    fn single_step_matches_hand_update() {
        let mut rng = Rng::new(2);
        let net = DeepLinearNet::scaled_orthogonal(4, 4, &[1.0, 0.5], &mut rng).unwrap();
        let phi = TargetSpec::square(4, 1, 3).generate().unwrap();
        let (eta, lambda) = (0.05, 0.2);
        let out = train_gd(&net, &phi, &cfg(eta, lambda, 1), 0).unwrap();
        let [w1, w2] = [&net.weights()[0], &net.weights()[1]];
        let residual = &w2.matmul(w1) - &phi;
        let g1 = w2.t_matmul(&residual);
        let g2 = residual.matmul_t(w1);
        let e1 = &w1.scale(1.0 - eta * lambda) - &g1.scale(eta);
        let e2 = &w2.scale(1.0 - eta * lambda) - &g2.scale(eta);
        assert!((&out.net.weights()[0] - &e1).max_abs() < 1e-15);
        assert!((&out.net.weights()[1] - &e2).max_abs() < 1e-15);
    }

    #[test]
    fn loss_decreases_and_trace_is_ordered() {
        let mut rng = Rng::new(3);
        let net = DeepLinearNet::scaled_orthogonal(8, 8, &[1.0, 1.0, 1.0], &mut rng).unwrap();
        let phi = TargetSpec::square(8, 2, 4).generate().unwrap();
        let c = TrainConfig {
            record_every: 7,
            ..cfg(0.02, 0.0, 50)
        };
        let out = train_gd(&net, &phi, &c, 2).unwrap();
        assert!(out.final_loss() <= out.initial_loss());
        assert!(out.warnings.is_empty(), "{:?}", out.warnings);
        let its = out.trace.iterations();
        assert_eq!(its, vec![0, 7, 14, 21, 28, 35, 42, 49, 50]);
        let csv = out.trace.to_csv();
        assert!(csv.starts_with("layer,iter,kind,index,value\n1,0,sv,0,"));
        for row in csv.lines().skip(1) {
            assert_eq!(row.split(',').count(), 5);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = Rng::new(4);
        let net = DeepLinearNet::scaled_orthogonal(4, 4, &[3.0, 3.0, 3.0], &mut rng).unwrap();
        let phi = TargetSpec::square(4, 2, 1).generate().unwrap();
        let err = train_gd(&net, &phi, &cfg(1.0, 0.0, 100), 0).unwrap_err();
        assert!(matches!(err, LabError::Divergence(_)));
    }

    #[test]
    fn rejects_bad_config() {
        let net = DeepLinearNet::linear(vec![Matrix::identity(2)]).unwrap();
        assert!(train_gd(&net, &Matrix::zeros(2, 2), &cfg(0.0, 0.0, 1), 0).is_err());
        assert!(train_gd(&net, &Matrix::zeros(2, 2), &cfg(0.1, -1.0, 1), 0).is_err());
    }
}
