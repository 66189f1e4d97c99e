//! One function per experiment kind. Each returns its trace, checks and
//! summary metrics; nothing here touches the filesystem.

use crate::adapters::{
    deep_lora_init, fit_quadratic, lora_init, quadratic_loss, LoraAdapter, LoraVariant,
};
use crate::check::Check;
use crate::error::{LabError, Result};
use crate::linalg::{numerical_rank, singular_values, svd, Matrix, Rng, DEFAULT_RANK_TOL};
use crate::network::{
    dropout_rank_experiment, train_gd, verify_invariant_subspaces, DeepLinearNet, DropoutRankConfig,
    SpectrumTrace, TargetSpec, TraceKind, TrainConfig, VerifyTolerances,
};
use crate::optim::{
    galore_step, memory_report, relora_step, verify_galore_relora_equivalence, AdamConfig, GaloreState,
    InnerMode, ProjectionSide, QuadraticProblem, Reinit, RelorState,
};
use crate::regeq::{exp_loss_trainer, least_squares_bias_check, MarginProblem};

use super::config::{AdapterKind, ExperimentConfig, ExperimentKind, InnerOptimizer};
use super::data::{adapter_task, ADAPTER_NOISE};

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub trace: SpectrumTrace,
    pub checks: Vec<Check>,
    /// Final metrics for `sweep_summary.csv`, in a fixed order per kind.
    pub metrics: Vec<(String, f64)>,
    /// Additional `(file name, contents)` outputs.
    pub extra_files: Vec<(String, String)>,
}

impl RunOutput {
    fn metric(&mut self, name: &str, value: f64) {
        self.metrics.push((name.into(), value));
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::DlnDynamics => dln_dynamics(cfg),
        ExperimentKind::LoraFinetune => lora_finetune(cfg),
        ExperimentKind::GaloreTrain => galore_train(cfg),
        ExperimentKind::ReloraTrain => relora_train(cfg),
        ExperimentKind::EquivalenceSuite => equivalence_suite(cfg),
        ExperimentKind::DropoutSuite => dropout_suite(cfg),
        ExperimentKind::MarginSuite => margin_suite(cfg),
        ExperimentKind::LsqBias => lsq_bias(cfg),
    }
}

fn dln_dynamics(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let phi = TargetSpec { d: cfg.d, k: cfg.k, r: cfg.r, seed: cfg.seed }.generate()?;
    let mut rng = Rng::new(cfg.seed.wrapping_add(1));
    let eps = vec![cfg.eps; cfg.depth];
    let net = DeepLinearNet::scaled_orthogonal(cfg.d, cfg.k, &eps, &mut rng)?;
    let train = TrainConfig {
        eta: cfg.eta,
        lambda: cfg.lambda,
        steps: cfg.steps,
        record_every: cfg.record_every,
        seed: cfg.seed,
    };
    let outcome = train_gd(&net, &phi, &train, cfg.r)?;
    let mut out = RunOutput::default();
    if cfg.depth >= 2 {
        let report = verify_invariant_subspaces(
            &outcome.snapshots,
            &phi,
            cfg.r,
            &eps,
            cfg.eta,
            cfg.lambda,
            VerifyTolerances::default(),
        )?;
        out.checks = report.checks("dln.");
        out.metric("block_dim", report.block_dim as f64);
        let last = report.measures.last().map(|(_, m)| m[0].block_mean).unwrap_or(0.0);
        out.metric("final_block_value", last);
    }
    out.checks.push(Check::at_most("dln.loss_not_increased", outcome.final_loss() - outcome.initial_loss(), 0.0));
    out.metric("initial_loss", outcome.initial_loss());
    out.metric("final_loss", outcome.final_loss());
    out.trace = outcome.trace;
    Ok(out)
}

fn lora_finetune(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut rng = Rng::new(cfg.seed);
    let task = adapter_task(cfg.d, cfg.k, ADAPTER_NOISE, &mut rng)?;
    let adapter = match cfg.adapter {
        AdapterKind::Vanilla => lora_init(&task.base, cfg.r, &mut rng)?,
        AdapterKind::Plus => lora_init(&task.base, cfg.r, &mut rng)?.with_variant(LoraVariant::Plus { gamma: cfg.gamma })?,
        AdapterKind::Deep => {
            let grad = &task.base - &task.target;
            deep_lora_init(&task.base, cfg.r, &grad, cfg.eps, cfg.gamma)?
        }
    };
    let mut out = RunOutput::default();
    let record = |out: &mut RunOutput, t: usize, a: &LoraAdapter| -> Result<()> {
        out.trace.push_values(0, t, TraceKind::Sv, &singular_values(&a.update())?);
        Ok(())
    };
    let initial_loss = quadratic_loss(&adapter, &task.target);
    let mut cur = adapter;
    record(&mut out, 0, &cur)?;
    let mut t = 0;
    while t < cfg.steps {
        let chunk = cfg.record_every.min(cfg.steps - t);
        cur = fit_quadratic(&cur, &task.target, cfg.eta, chunk)?.0;
        t += chunk;
        record(&mut out, t, &cur)?;
    }
    let final_loss = quadratic_loss(&cur, &task.target);
    let rank = cur.update_rank(DEFAULT_RANK_TOL)?;
    out.checks.push(Check::at_most("lora.loss_not_increased", final_loss - initial_loss, 0.0));
    out.checks.push(Check::at_most("lora.update_rank_within_adapter", rank as f64, cfg.r as f64));
    out.metric("initial_loss", initial_loss);
    out.metric("final_loss", final_loss);
    out.metric("update_rank", rank as f64);
    out.metric("update_error", (&cur.update() - &task.update).frobenius_norm());
    Ok(out)
}

fn resolve_step(problem: &QuadraticProblem, eta: f64) -> Result<f64> {
    if eta > 0.0 {
        Ok(eta)
    } else {
        problem.safe_step()
    }
}

fn adam_config(cfg: &ExperimentConfig) -> Option<AdamConfig> {
    match cfg.inner {
        InnerOptimizer::Gd => None,
        InnerOptimizer::Adam => Some(AdamConfig::default()),
    }
}

fn record_weight(out: &mut RunOutput, t: usize, w: &Matrix, loss: f64) -> Result<()> {
    out.trace.push_values(0, t, TraceKind::Sv, &singular_values(w)?);
    if !loss.is_finite() || loss > 1e12 {
        return Err(LabError::Divergence(format!("loss {loss:e} at step {t}")));
    }
    Ok(())
}

fn finish_quadratic(out: &mut RunOutput, name: &str, problem: &QuadraticProblem, w: &Matrix) {
    let initial = problem.loss(&problem.w0);
    let last = problem.loss(w);
    out.checks.push(Check::at_most(format!("{name}.loss_not_increased"), last - initial, 0.0));
    out.metric("initial_loss", initial);
    out.metric("final_loss", last);
}

fn galore_train(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut rng = Rng::new(cfg.seed);
    let problem = QuadraticProblem::random(cfg.k, cfg.d, &mut rng);
    let eta = resolve_step(&problem, cfg.eta)?;
    let side = ProjectionSide::for_shape(cfg.k, cfg.d);
    let mut state = GaloreState::new((cfg.k, cfg.d), cfg.r, cfg.period, 1.0, side, adam_config(cfg))?;
    let mut w = problem.w0.clone();
    let mut out = RunOutput::default();
    record_weight(&mut out, 0, &w, problem.loss(&w))?;
    for t in 1..=cfg.steps {
        let (next, s) = galore_step(&w, &problem.gradient(&w), &state, eta)?;
        w = next;
        state = s;
        if t % cfg.record_every == 0 || t == cfg.steps {
            record_weight(&mut out, t, &w, problem.loss(&w))?;
        }
    }
    finish_quadratic(&mut out, "galore", &problem, &w);
    let mem = memory_report("weight", cfg.k, cfg.d, cfg.r);
    out.metric("memory_ratio", mem.ratio);
    out.extra_files.push(("memory.json".into(), serde_json::to_string_pretty(&mem).expect("serializes")));
    Ok(out)
}

fn relora_train(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut rng = Rng::new(cfg.seed);
    let problem = QuadraticProblem::random(cfg.k, cfg.d, &mut rng);
    let eta = resolve_step(&problem, cfg.eta)?;
    let side = ProjectionSide::for_shape(cfg.k, cfg.d);
    let mut state = RelorState::new(&problem.w0, cfg.r, cfg.period, side, Reinit::GradientSvd, adam_config(cfg))?;
    let mut out = RunOutput::default();
    record_weight(&mut out, 0, &problem.w0, problem.loss(&problem.w0))?;
    for t in 1..=cfg.steps {
        state = relora_step(&state, |x| Ok(problem.gradient(x)), eta)?;
        if t % cfg.record_every == 0 || t == cfg.steps {
            let w = state.effective_weight();
            record_weight(&mut out, t, &w, problem.loss(&w))?;
        }
    }
    finish_quadratic(&mut out, "relora", &problem, &state.effective_weight());
    Ok(out)
}

fn equivalence_suite(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut rng = Rng::new(cfg.seed);
    let problem = QuadraticProblem::random(cfg.k, cfg.d, &mut rng);
    let eta = resolve_step(&problem, cfg.eta)?;
    let mode = match cfg.inner {
        InnerOptimizer::Gd => InnerMode::Gd,
        InnerOptimizer::Adam => InnerMode::Adam,
    };
    let rep = verify_galore_relora_equivalence(&problem, cfg.r, cfg.period, eta, cfg.steps, mode, Reinit::GradientSvd)?;
    let control = verify_galore_relora_equivalence(
        &problem,
        cfg.r,
        cfg.period,
        eta,
        cfg.steps,
        mode,
        Reinit::Random(rng.split()),
    )?;
    let mut out = RunOutput::default();
    out.checks.push(Check::at_most("equivalence.max_iterate_deviation", rep.max_deviation, 1e-9));
    out.checks.push(Check::at_most("equivalence.max_subspace_angle", rep.max_angle, 1e-6));
    out.metric("max_deviation", rep.max_deviation);
    out.metric("max_angle", rep.max_angle);
    out.metric("random_control_deviation", control.max_deviation);
    Ok(out)
}

fn dropout_suite(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let exp = DropoutRankConfig {
        d: cfg.d,
        target_rank: cfg.r,
        samples: cfg.samples,
        depth: cfg.depth,
        keep: cfg.mu,
        eta: cfg.eta,
        steps: cfg.steps,
        record_every: cfg.record_every,
        seed: cfg.seed,
        ..DropoutRankConfig::default()
    };
    let outcome = dropout_rank_experiment(&exp)?;
    let mut out = RunOutput::default();
    out.checks.push(Check::at_most(
        "dropout.final_rank_not_above_initial",
        outcome.final_rank() as f64,
        outcome.initial_rank() as f64,
    ));
    out.metric("initial_rank", outcome.initial_rank() as f64);
    out.metric("final_rank", outcome.final_rank() as f64);
    out.metric("final_loss", outcome.final_loss);
    out.trace = outcome.trace;
    Ok(out)
}

fn margin_suite(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let widths = vec![cfg.hidden; cfg.depth - 1];
    let mut out = RunOutput::default();
    let mut worst = 0.0f64;
    for (name, problem) in [("symmetric_pair", MarginProblem::symmetric_pair()), ("orthogonal_pair", MarginProblem::orthogonal_pair())] {
        let mut rng = Rng::new(cfg.seed);
        let res = exp_loss_trainer(&problem, cfg.depth, &widths, cfg.eta, cfg.steps, &mut rng)?;
        out.checks.push(Check::holds(format!("margin.{name}.separated"), !res.inconclusive()));
        out.checks.push(Check::at_most(format!("margin.{name}.angle_to_oracle"), res.angle_to_oracle, 2e-2));
        worst = worst.max(res.angle_to_oracle);
    }
    out.metric("max_angle", worst);
    Ok(out)
}

fn lsq_bias(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut rng = Rng::new(cfg.seed);
    let x = rng.gaussian_matrix(cfg.k, cfg.d, 1.0);
    if numerical_rank(&x, DEFAULT_RANK_TOL)? < cfg.k {
        return Err(LabError::Config("sampled X is rank deficient; change the seed".into()));
    }
    let y: Vec<f64> = (0..cfg.k).map(|_| rng.gaussian()).collect();
    let eta = if cfg.eta > 0.0 {
        cfg.eta
    } else {
        let s = svd(&x)?.sigma_max();
        1.0 / (s * s)
    };
    let from_zero = least_squares_bias_check(&x, &y, &vec![0.0; cfg.d], eta, cfg.steps)?;
    let w0: Vec<f64> = (0..cfg.d).map(|_| rng.gaussian()).collect();
    let from_random = least_squares_bias_check(&x, &y, &w0, eta, cfg.steps)?;
    let mut out = RunOutput::default();
    out.checks.push(Check::at_most("lsq.row_span_confinement", from_zero.max_confinement_residual, 1e-10));
    out.checks.push(Check::at_most("lsq.min_norm_limit", from_zero.limit_gap, 1e-6));
    out.checks.push(Check::at_most("lsq.offset_row_span_confinement", from_random.max_confinement_residual, 1e-10));
    out.checks.push(Check::at_most("lsq.offset_null_component_drift", from_random.max_null_drift, 1e-10));
    out.checks.push(Check::at_most("lsq.offset_limit", from_random.limit_gap, 1e-6));
    out.metric("limit_gap", from_zero.limit_gap);
    out.metric("confinement_residual", from_zero.max_confinement_residual);
    out.metric("final_loss", from_zero.final_loss);
    Ok(out)
}
