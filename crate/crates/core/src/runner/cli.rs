//! `run`, `verify` and `sweep`, mapped to process exit codes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::check::{all_pass, Check};
use crate::error::{LabError, Result};

use super::config::{ExperimentConfig, NUMERIC_FIELDS};
use super::experiments::{run_experiment, RunOutput};
use super::suites::{criterion, suite_plan, SUITES};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

pub const FAILURE_MARKER: &str = "FAILED";
const OUTPUT_FILES: &[&str] = &["trace.csv", "report.json", "config.echo.json", "memory.json"];

pub fn exit_code(err: &LabError) -> i32 {
    match err {
        LabError::Divergence(_) | LabError::NonFinite(_) | LabError::NoConvergence { .. } | LabError::Singular(_) => {
            EXIT_DIVERGENCE
        }
        _ => EXIT_CONFIG,
    }
}

fn kind_name(err: &LabError) -> &'static str {
    if exit_code(err) == EXIT_DIVERGENCE {
        "divergence"
    } else {
        "config"
    }
}

/// One line for the diagnostic stream: `error code=<n> kind=<kind> msg=<json string>`.
pub fn diagnostic(err: &LabError) -> String {
    let msg = serde_json::to_string(&err.to_string()).expect("string serializes");
    format!("error code={} kind={} msg={msg}", exit_code(err), kind_name(err))
}

/// Overrides from the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(out) = &self.out {
            cfg.output_dir = out.to_string_lossy().into_owned();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
    }
}

pub struct RunResult {
    pub code: i32,
    pub output: Option<RunOutput>,
}

/// Runs one resolved config and writes its outputs.
///
/// Check failures still write every output. Errors during the run clear the
/// outputs and leave only the failure marker.
pub fn run_resolved(cfg: &ExperimentConfig) -> RunResult {
    let dir = Path::new(&cfg.output_dir);
    let result = run_experiment(cfg).and_then(|out| {
        write_outputs(dir, cfg, &out)?;
        Ok(out)
    });
    match result {
        Ok(out) => {
            let code = if all_pass(&out.checks) { EXIT_PASS } else { EXIT_CHECK_FAIL };
            if code == EXIT_CHECK_FAIL {
                let failed: Vec<&str> = out.checks.iter().filter(|c| !c.pass).map(|c| c.check.as_str()).collect();
                eprintln!("checks failed: {}", failed.join(","));
            }
            RunResult { code, output: Some(out) }
        }
        Err(e) => {
            let line = diagnostic(&e);
            eprintln!("{line}");
            if let Err(io) = write_failure(dir, &line) {
                eprintln!("{}", diagnostic(&io));
            }
            RunResult { code: exit_code(&e), output: None }
        }
    }
}

pub fn run(config_path: &Path, overrides: &Overrides) -> i32 {
    let mut cfg = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", diagnostic(&e));
            return exit_code(&e);
        }
    };
    overrides.apply(&mut cfg);
    let res = run_resolved(&cfg);
    if let Some(out) = &res.output {
        print_checks(&out.checks);
    }
    res.code
}

fn write_outputs(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let marker = dir.join(FAILURE_MARKER);
    if marker.exists() {
        fs::remove_file(marker)?;
    }
    fs::write(dir.join("trace.csv"), out.trace.to_csv())?;
    let report = serde_json::to_string_pretty(&out.checks).map_err(|e| LabError::Config(e.to_string()))?;
    fs::write(dir.join("report.json"), report + "\n")?;
    fs::write(dir.join("config.echo.json"), cfg.to_json() + "\n")?;
    for (name, contents) in &out.extra_files {
        fs::write(dir.join(name), contents.clone() + "\n")?;
    }
    Ok(())
}

fn write_failure(dir: &Path, line: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    for name in OUTPUT_FILES {
        let p = dir.join(name);
        if p.exists() {
            fs::remove_file(p)?;
        }
    }
    fs::write(dir.join(FAILURE_MARKER), format!("{line}\n"))?;
    Ok(())
}

fn print_checks(checks: &[Check]) {
    let mut out = std::io::stdout().lock();
    for c in checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        if writeln!(out, "{status} {} gap={:.3e} tol={:.1e}", c.check, c.gap, c.tolerance).is_err() {
            return;
        }
    }
}

pub fn verify(suite: &str) -> i32 {
    let Some((ids, companion)) = suite_plan(suite) else {
        let e = LabError::Config(format!("unknown suite `{suite}`; expected one of {}", SUITES.join(", ")));
        eprintln!("{}", diagnostic(&e));
        return EXIT_CONFIG;
    };
    let mut ok = true;
    let mut run_group = |label: String, f: fn() -> Result<Vec<Check>>| -> Option<i32> {
        let start = Instant::now();
        match f() {
            Ok(checks) => {
                let pass = all_pass(&checks);
                ok &= pass;
                println!("{} {label} ({:.1} s)", if pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
                print_checks(&checks);
                None
            }
            Err(e) => {
                eprintln!("{}", diagnostic(&e));
                Some(exit_code(&e))
            }
        }
    };
    for id in ids {
        let c = criterion(id);
        if let Some(code) = run_group(format!("criterion {id}: {}", c.name), c.run) {
            return code;
        }
    }
    if let Some(f) = companion {
        if let Some(code) = run_group(format!("{suite} companion checks"), f) {
            return code;
        }
    }
    if ok {
        EXIT_PASS
    } else {
        EXIT_CHECK_FAIL
    }
}

/// One member per value in `<out>/<index>_<param>_<value>`, seeds `seed + index`,
/// plus `<out>/sweep_summary.csv`.
pub fn sweep(config_path: &Path, param: &str, values: &[String], overrides: &Overrides) -> i32 {
    match prepare_sweep(config_path, param, values, overrides) {
        Ok((base, members)) => {
            let results: Vec<RunResult> = std::thread::scope(|s| {
                let handles: Vec<_> = members.iter().map(|cfg| s.spawn(move || run_resolved(cfg))).collect();
                handles.into_iter().map(|h| h.join().expect("sweep member panicked")).collect()
            });
            let summary = sweep_summary(&members, values, &results);
            let dir = Path::new(&base.output_dir);
            if let Err(e) = fs::create_dir_all(dir).and_then(|_| fs::write(dir.join("sweep_summary.csv"), summary)) {
                let e = LabError::from(e);
                eprintln!("{}", diagnostic(&e));
                return exit_code(&e);
            }
            results.iter().map(|r| r.code).max_by_key(|&c| match c {
                EXIT_PASS => 0,
                EXIT_CHECK_FAIL => 1,
                EXIT_DIVERGENCE => 2,
                _ => 3,
            }).unwrap_or(EXIT_PASS)
        }
        Err(e) => {
            eprintln!("{}", diagnostic(&e));
            exit_code(&e)
        }
    }
}

fn prepare_sweep(
    config_path: &Path,
    param: &str,
    values: &[String],
    overrides: &Overrides,
) -> Result<(ExperimentConfig, Vec<ExperimentConfig>)> {
    if !NUMERIC_FIELDS.contains(&param) {
        return Err(LabError::Config(format!("`{param}` is not a numeric config field")));
    }
    if values.is_empty() {
        return Err(LabError::Config("sweep needs at least one value".into()));
    }
    let mut base = ExperimentConfig::load(config_path)?;
    overrides.apply(&mut base);
    let mut members = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.set_numeric(param, v)?;
        if param != "seed" {
            cfg.seed = base.seed.wrapping_add(i as u64);
        }
        cfg.output_dir = Path::new(&base.output_dir)
            .join(format!("{i:02}_{param}_{}", v.trim()))
            .to_string_lossy()
            .into_owned();
        cfg.validate()?;
        members.push(cfg);
    }
    Ok((base, members))
}

fn sweep_summary(members: &[ExperimentConfig], values: &[String], results: &[RunResult]) -> String {
    let names: Vec<String> = results
        .iter()
        .find_map(|r| r.output.as_ref())
        .map(|o| o.metrics.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();
    let mut out = String::from("index,value,seed,exit_code");
    for n in &names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (i, ((cfg, v), r)) in members.iter().zip(values).zip(results).enumerate() {
        let _ = write!(out, "{i},{},{},{}", v.trim(), cfg.seed, r.code);
        for n in &names {
            let value = r
                .output
                .as_ref()
                .and_then(|o| o.metrics.iter().find(|(m, _)| m == n))
                .map(|(_, x)| x.to_string())
                .unwrap_or_default();
            let _ = write!(out, ",{value}");
        }
        out.push('\n');
    }
    out
}
