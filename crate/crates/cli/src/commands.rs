use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use nodalflow_core::config::RunConfig;
use nodalflow_core::diagnostics::{certify, SolutionReport};
use nodalflow_core::dump;
use nodalflow_core::minimax::{find_solutions, SolutionSet};
use nodalflow_core::model::{validate_assumptions, Check, ValidationReport};
use nodalflow_core::Problem;
use serde::Serialize;

use crate::output::{config_hash, summary_row, Manifest, ManifestEntry, SUMMARY_HEADER};
use crate::{EXIT_FAILURE, EXIT_NO_SOLUTION, EXIT_OK};

/// Model hypotheses plus sanity of the solver parameters.
pub fn validate(cfg: &RunConfig) -> ValidationReport {
    let mut report = validate_assumptions(&cfg.model);
    let flow = cfg.flow.check();
    report.checks.push(Check {
        name: "flow parameters".into(),
        passed: flow.is_ok(),
        detail: flow.err().map_or_else(|| "ok".into(), |e| e.to_string()),
        witness: None,
    });
    report
}

pub struct SolveOutcome {
    pub validation: ValidationReport,
    pub set: Option<SolutionSet>,
    pub reports: Vec<SolutionReport>,
    pub manifest: Option<Manifest>,
    pub summary_rows: Vec<String>,
}

impl SolveOutcome {
    pub fn certified(&self) -> usize {
        self.reports.iter().filter(|r| r.unpenalized).count()
    }

    pub fn exit_code(&self) -> i32 {
        if !self.validation.passed() {
            EXIT_FAILURE
        } else if self.set.as_ref().is_some_and(|s| s.requested == 0) || self.certified() > 0 {
            EXIT_OK
        } else {
            EXIT_NO_SOLUTION
        }
    }

    pub fn describe(&self) -> String {
        if !self.validation.passed() {
            let names: Vec<&str> = self.validation.failures().map(|c| c.name.as_str()).collect();
            return format!("validation failed: {}", names.join(", "));
        }
        let Some(set) = &self.set else { return "no run".into() };
        let mut s = format!(
            "{} of {} requested solutions ({} certified){}",
            set.solutions.len(),
            set.requested,
            self.certified(),
            if set.partial { ", partial" } else { "" }
        );
        for (j, r) in self.reports.iter().enumerate() {
            s.push_str(&format!(
                "\n  c_{} ≈ {:.10}  residual {:.2e}  mass {:.2e}",
                j + 1,
                r.energy.total,
                r.weak_residual,
                r.penalty_mass
            ));
        }
        s
    }
}

#[derive(Serialize)]
struct StoredReport<'a> {
    basis_size: usize,
    coefficients: &'a [f64],
    iterations: usize,
    flow_residual: f64,
    classification: nodalflow_core::flow::Classification,
    report: &'a SolutionReport,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

/// Validate, search, certify and write the output tree under `out`.
pub fn solve(cfg: &RunConfig, out: &Path, command: &str) -> Result<SolveOutcome> {
    let started = Instant::now();
    let validation = validate(cfg);
    if !validation.passed() {
        return Ok(SolveOutcome { validation, set: None, reports: vec![], manifest: None, summary_rows: vec![] });
    }
    let problem = Problem::new(cfg.model.clone())?;
    let set = find_solutions(&problem, cfg.k, &cfg.search, &cfg.flow, cfg.seed)?;
    fs::create_dir_all(out.join("solutions")).with_context(|| format!("creating {}", out.display()))?;
    let mut reports = Vec::new();
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for (i, sol) in set.solutions.iter().enumerate() {
        let j = i + 1;
        let dir = out.join("solutions").join(j.to_string());
        fs::create_dir_all(&dir)?;
        let report = certify(&problem, &sol.u, validation.delta0, &cfg.diagnostics)?;
        let field = dir.join("field.bin");
        let report_path = dir.join("report.json");
        let history = dir.join("history.csv");
        dump::write_binary(&field, &sol.u, cfg.model.eps)?;
        write_json(
            &report_path,
            &StoredReport {
                basis_size: sol.basis_size,
                coefficients: &sol.coefficients,
                iterations: sol.flow.iterations,
                flow_residual: sol.flow.residual,
                classification: sol.flow.classification,
                report: &report,
            },
        )?;
        fs::write(&history, sol.flow.history_csv())?;
        rows.push(summary_row(cfg.model.eps, j, &report));
        entries.push(ManifestEntry {
            index: j,
            energy: sol.energy,
            penalty_mass: report.penalty_mass,
            plus_norm: report.plus_norm,
            minus_norm: report.minus_norm,
            residual: report.weak_residual,
            certified: report.unpenalized,
            field,
            report: report_path,
            history,
        });
        reports.push(report);
    }
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for r in &rows {
        summary.push_str(r);
        summary.push('\n');
    }
    fs::write(out.join("summary.csv"), summary)?;
    let manifest = Manifest {
        command: command.to_string(),
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        eps: cfg.model.eps,
        k: cfg.k,
        output_dir: out.to_path_buf(),
        partial: set.partial,
        starts_run: set.starts_run,
        solutions: entries,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(SolveOutcome { validation, set: Some(set), reports, manifest: Some(manifest), summary_rows: rows })
}

pub struct SweepOutcome {
    pub runs: Vec<(f64, std::result::Result<SolveOutcome, String>)>,
}

impl SweepOutcome {
    pub fn exit_code(&self) -> i32 {
        let all_ok = self.runs.iter().all(|(_, r)| matches!(r, Ok(o) if o.certified() > 0));
        if all_ok {
            EXIT_OK
        } else {
            EXIT_NO_SOLUTION
        }
    }
}

#[derive(Serialize)]
struct SweepManifest {
    command: &'static str,
    config_hash: String,
    seed: u64,
    runs: Vec<SweepRun>,
}

#[derive(Serialize)]
struct SweepRun {
    eps: f64,
    dir: PathBuf,
    error: Option<String>,
}

/// One `solve` per `ε` (same rescaled-frame bump layout), then a combined
/// summary. Per-`ε` failures are recorded and the sweep continues.
pub fn sweep(cfg: &RunConfig, eps_list: &[f64], out: &Path) -> Result<SweepOutcome> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    let mut listing = Vec::new();
    for (i, &eps) in eps_list.iter().enumerate() {
        let dir = out.join(format!("eps-{i}"));
        let result = cfg.with_eps(eps).map_err(anyhow::Error::from).and_then(|c| solve(&c, &dir, "sweep"));
        let result = result.map_err(|e| format!("{e:#}"));
        if let Ok(o) = &result {
            rows.extend(o.summary_rows.iter().cloned());
        }
        listing.push(SweepRun { eps, dir, error: result.as_ref().err().cloned() });
        runs.push((eps, result));
    }
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for r in &rows {
        summary.push_str(r);
        summary.push('\n');
    }
    fs::write(out.join("summary.csv"), summary)?;
    write_json(
        &out.join("manifest.json"),
        &SweepManifest { command: "sweep", config_hash: config_hash(cfg), seed: cfg.seed, runs: listing },
    )?;
    Ok(SweepOutcome { runs })
}
