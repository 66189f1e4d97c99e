//! Flat JSON experiment configs.
//!
//! Absent fields take per-kind defaults; the resolved form (every field set)
//! is what gets echoed, and it parses back to itself.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    DlnDynamics,
    LoraFinetune,
    GaloreTrain,
    ReloraTrain,
    EquivalenceSuite,
    DropoutSuite,
    MarginSuite,
    LsqBias,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Vanilla,
    Plus,
    Deep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerOptimizer {
    Gd,
    Adam,
}

/// Config as written by the user. Every field but `kind` is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: Option<ExperimentKind>,
    d: Option<usize>,
    k: Option<usize>,
    r: Option<usize>,
    depth: Option<usize>,
    hidden: Option<usize>,
    samples: Option<usize>,
    eps: Option<f64>,
    eta: Option<f64>,
    lambda: Option<f64>,
    gamma: Option<f64>,
    steps: Option<usize>,
    period: Option<usize>,
    record_every: Option<usize>,
    mu: Option<f64>,
    adapter: Option<AdapterKind>,
    inner: Option<InnerOptimizer>,
    seed: Option<u64>,
    output_dir: Option<String>,
}

/// Fully resolved config.
///
/// * `d`, `k`: input and output widths (`k` is the sample count for `lsq_bias`);
/// * `r`: target rank, adapter rank, or projection rank depending on `kind`;
/// * `eta = 0` asks for the problem's safe step where one exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub d: usize,
    pub k: usize,
    pub r: usize,
    pub depth: usize,
    pub hidden: usize,
    pub samples: usize,
    pub eps: f64,
    pub eta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub steps: usize,
    pub period: usize,
    pub record_every: usize,
    pub mu: f64,
    pub adapter: AdapterKind,
    pub inner: InnerOptimizer,
    pub seed: u64,
    pub output_dir: String,
}

pub const DEFAULT_OUTPUT_DIR: &str = "out";

/// Fields that `sweep` may vary.
pub const NUMERIC_FIELDS: &[&str] = &[
    "d", "k", "r", "depth", "hidden", "samples", "eps", "eta", "lambda", "gamma", "steps", "period",
    "record_every", "mu", "seed",
];

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        use ExperimentKind::*;
        let base = Self {
            kind,
            d: 8,
            k: 8,
            r: 2,
            depth: 3,
            hidden: 8,
            samples: 0,
            eps: 1.0,
            eta: 0.01,
            lambda: 0.0,
            gamma: 1.0,
            steps: 100,
            period: 5,
            record_every: 10,
            mu: 1.0,
            adapter: AdapterKind::Vanilla,
            inner: InnerOptimizer::Gd,
            seed: 0,
            output_dir: DEFAULT_OUTPUT_DIR.into(),
        };
        match kind {
            DlnDynamics => Self { d: 30, k: 30, r: 3, steps: 500, ..base },
            LoraFinetune => Self {
                d: 32,
                k: 2,
                r: 8,
                eps: 1e-3,
                eta: 0.05,
                gamma: 0.1,
                steps: 20_000,
                record_every: 1000,
                ..base
            },
            GaloreTrain | ReloraTrain => Self {
                d: 16,
                k: 16,
                r: 4,
                eta: 0.0,
                steps: 200,
                period: 10,
                ..base
            },
            EquivalenceSuite => Self {
                d: 12,
                k: 12,
                r: 3,
                eta: 0.0,
                steps: 30,
                period: 10,
                ..base
            },
            DropoutSuite => Self {
                d: 20,
                k: 20,
                r: 15,
                samples: 256,
                eta: 0.01,
                steps: 2000,
                record_every: 250,
                mu: 0.4,
                seed: 1,
                ..base
            },
            MarginSuite => Self {
                d: 2,
                k: 1,
                depth: 2,
                hidden: 3,
                eta: 0.1,
                steps: 100_000,
                record_every: 10_000,
                seed: 1,
                ..base
            },
            LsqBias => Self {
                d: 5,
                k: 2,
                eta: 0.0,
                steps: 20_000,
                ..base
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        let kind = raw.kind.ok_or_else(|| LabError::Config("missing field `kind`".into()))?;
        let mut cfg = Self::defaults(kind);
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = raw.$f { cfg.$f = v; } )* };
        }
        take!(d, k, r, depth, hidden, samples, eps, eta, lambda, gamma, steps, period, record_every, mu, adapter, inner, seed, output_dir);
        if kind == ExperimentKind::DlnDynamics && raw.k.is_none() {
            cfg.k = cfg.d;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Sets a numeric field from its text form.
    pub fn set_numeric(&mut self, field: &str, value: &str) -> Result<()> {
        fn int(field: &str, value: &str) -> Result<usize> {
            value
                .trim()
                .parse()
                .map_err(|_| LabError::Config(format!("field `{field}` needs a non-negative integer, got `{value}`")))
        }
        fn real(field: &str, value: &str) -> Result<f64> {
            value
                .trim()
                .parse()
                .map_err(|_| LabError::Config(format!("field `{field}` needs a number, got `{value}`")))
        }
        match field {
            "d" => self.d = int(field, value)?,
            "k" => self.k = int(field, value)?,
            "r" => self.r = int(field, value)?,
            "depth" => self.depth = int(field, value)?,
            "hidden" => self.hidden = int(field, value)?,
            "samples" => self.samples = int(field, value)?,
            "steps" => self.steps = int(field, value)?,
            "period" => self.period = int(field, value)?,
            "record_every" => self.record_every = int(field, value)?,
            "seed" => self.seed = int(field, value)? as u64,
            "eps" => self.eps = real(field, value)?,
            "eta" => self.eta = real(field, value)?,
            "lambda" => self.lambda = real(field, value)?,
            "gamma" => self.gamma = real(field, value)?,
            "mu" => self.mu = real(field, value)?,
            _ => return Err(LabError::Config(format!("`{field}` is not a numeric config field"))),
        }
        Ok(())
    }

    /// Checks the preconditions of the target module before any computation.
    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        let fail = |msg: String| Err(LabError::Config(msg));
        for (name, v) in [("eps", self.eps), ("eta", self.eta), ("lambda", self.lambda), ("gamma", self.gamma), ("mu", self.mu)] {
            if !v.is_finite() {
                return fail(format!("`{name}` must be finite"));
            }
        }
        if self.eta < 0.0 || self.lambda < 0.0 {
            return fail("`eta` and `lambda` must be non-negative".into());
        }
        if self.record_every == 0 {
            return fail("`record_every` must be at least 1".into());
        }
        if self.output_dir.is_empty() {
            return fail("`output_dir` is empty".into());
        }
        let needs_eta = matches!(self.kind, DlnDynamics | LoraFinetune | DropoutSuite | MarginSuite);
        if needs_eta && self.eta == 0.0 {
            return fail(format!("`eta` must be positive for {:?}", self.kind));
        }
        match self.kind {
            DlnDynamics => {
                if self.d == 0 || self.k == 0 || self.k > self.d {
                    return fail(format!("need 1 <= k <= d, got k={}, d={}", self.k, self.d));
                }
                if self.r > self.k {
                    return fail(format!("target rank {} exceeds k={}", self.r, self.k));
                }
                if self.k < self.d && self.r != self.k {
                    return fail(format!("a wide target (k < d) needs rank r = k, got r={}, k={}", self.r, self.k));
                }
                if self.depth == 0 {
                    return fail("`depth` must be at least 1".into());
                }
                if !(self.eps > 0.0) {
                    return fail("`eps` must be positive".into());
                }
                if self.lambda * self.eta >= 1.0 {
                    return fail("`eta * lambda` must be below 1".into());
                }
            }
            LoraFinetune => {
                if self.d == 0 || self.r == 0 || self.r > self.d {
                    return fail(format!("adapter rank {} must lie in 1..={}", self.r, self.d));
                }
                if self.k == 0 || self.k > self.d {
                    return fail(format!("update rank {} must lie in 1..={}", self.k, self.d));
                }
                if !(self.gamma > 0.0) {
                    return fail("`gamma` must be positive".into());
                }
                if self.adapter == AdapterKind::Deep && !(self.eps > 0.0) {
                    return fail("`eps` must be positive for deep adapters".into());
                }
            }
            GaloreTrain | ReloraTrain | EquivalenceSuite => {
                if self.d == 0 || self.k == 0 || self.r == 0 || self.r > self.d.min(self.k) {
                    return fail(format!("rank {} must lie in 1..=min(k, d) for a {}x{} weight", self.r, self.k, self.d));
                }
                if self.period == 0 {
                    return fail("`period` must be at least 1".into());
                }
            }
            DropoutSuite => {
                if self.d == 0 || self.r == 0 || self.r > self.d {
                    return fail(format!("target rank {} must lie in 1..={}", self.r, self.d));
                }
                if self.depth < 2 || self.samples == 0 {
                    return fail("need depth >= 2 and at least one sample".into());
                }
                if !(self.mu > 0.0 && self.mu <= 1.0) {
                    return fail(format!("keep probability {} outside (0, 1]", self.mu));
                }
            }
            MarginSuite => {
                if self.depth == 0 || (self.depth > 1 && self.hidden == 0) {
                    return fail("need depth >= 1 and a positive hidden width".into());
                }
                if self.eta > 0.5 {
                    return fail(format!("step {} exceeds 0.5 / max |x|^2 = 0.5", self.eta));
                }
            }
            LsqBias => {
                if self.k == 0 || self.k >= self.d {
                    return fail(format!("need 1 <= k < d samples, got k={}, d={}", self.k, self.d));
                }
            }
        }
        Ok(())
    }
}
