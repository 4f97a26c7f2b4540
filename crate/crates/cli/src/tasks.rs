//! Task execution and artifact writing.

use std::fs;
use std::path::Path;

use hamlearn::eeb::{assemble, EEBSystem};
use hamlearn::learn::{
    algorithm_a, algorithm_b, certify, DirectionResult, DirectionStatus, LearnOptions, LearnReport, SolveStatus,
    SolverOptions,
};
use hamlearn::linalg::spectral_norm;
use hamlearn::modular::{build_modular, gibbs_residual, restricted_ops, verify_commuting_locality, GnsSpace};
use hamlearn::model::{enumerate_pkl, pkl_size_bound};
use hamlearn::oracle::{build_gibbs, exact_tables, measure_tables, ExpectationTable, GibbsState, NoiseMode, NoiseSpec};
use hamlearn::PauliString;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{ModelSource, Resolved, Task};
use crate::{plot, CliError};

/// Modular identities are checked at this tolerance.
const MODULAR_TOL: f64 = 1e-9;
/// Cross-module agreement tolerance.
const CROSS_TOL: f64 = 1e-10;
/// Largest model for which the commuting-locality check is attempted.
const LOCALITY_MAX_QUBITS: usize = 4;

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Other(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn lib_err(e: hamlearn::Error) -> CliError {
    match e {
        hamlearn::Error::CapExceeded { .. } => CliError::Cap(e.to_string()),
        other => CliError::Other(other.to_string()),
    }
}

/// Writes the resolved config to `config.resolved.json`.
pub fn echo_config(res: &Resolved) -> Result<(), CliError> {
    fs::create_dir_all(&res.out).map_err(|e| CliError::Other(format!("{}: {e}", res.out.display())))?;
    let mut cfg = res.config.clone();
    cfg.model = ModelSource::Inline(res.model.to_file());
    cfg.output = Some(res.out.clone());
    cfg.tables = res.tables_path();
    write_json(&res.out.join("config.resolved.json"), &cfg)
}

/// Lazily computed shared inputs.
struct Context<'a> {
    res: &'a Resolved,
    state: Option<GibbsState>,
    table: Option<ExpectationTable>,
    system: Option<EEBSystem>,
}

impl<'a> Context<'a> {
    fn perturbers(&self) -> Vec<PauliString> {
        enumerate_pkl(&self.res.model, self.res.config.level)
    }

    fn state(&mut self) -> Result<&GibbsState, CliError> {
        if self.state.is_none() {
            let lambda = self.res.model.true_coeffs().ok_or_else(|| CliError::Config("model has no coefficients".into()))?;
            self.state = Some(build_gibbs(&self.res.model, lambda).map_err(lib_err)?);
        }
        Ok(self.state.as_ref().unwrap())
    }

    fn table(&mut self) -> Result<&ExpectationTable, CliError> {
        if self.table.is_none() {
            let ps = self.perturbers();
            let terms = self.res.model.terms().to_vec();
            let noise = self.res.config.noise.clone();
            let t = match self.res.tables_path() {
                Some(p) => ExpectationTable::read_csv(&p, ps, terms, noise).map_err(|e| CliError::Config(e.to_string()))?,
                None => {
                    let state = self.state()?;
                    measure_tables(state, &ps, &terms, &noise).map_err(lib_err)?
                }
            };
            self.table = Some(t);
        }
        Ok(self.table.as_ref().unwrap())
    }

    fn system(&mut self) -> Result<&EEBSystem, CliError> {
        if self.system.is_none() {
            let sys = assemble(self.table()?);
            self.system = Some(sys);
        }
        Ok(self.system.as_ref().unwrap())
    }

    fn learn_options(&self) -> LearnOptions {
        LearnOptions {
            solver: SolverOptions { tol: self.res.config.tol, ..SolverOptions::default() },
            box_factor: self.res.config.box_factor,
            lambda_box: None,
            keep_certificates: true,
        }
    }
}

#[derive(Default)]
struct Collected {
    sections: Map<String, Value>,
    errors: Vec<Value>,
    certificates: Map<String, Value>,
    exit: i32,
    solver_failure: bool,
}

impl Collected {
    fn fail(&mut self, task: Task, e: CliError) {
        log::error!("{task:?}: {e}");
        if self.exit == 0 {
            self.exit = e.code();
        }
        self.errors.push(json!({ "task": task, "error": e.kind(), "message": e.to_string() }));
    }
}

/// Strips certificates into the side table and notes solver failures.
fn take_certificates(dirs: &mut [DirectionResult], key: &str, out: &mut Collected) {
    for (i, d) in dirs.iter_mut().enumerate() {
        if d.status == DirectionStatus::NumericalFailure {
            out.solver_failure = true;
        }
        if let Some(c) = d.certificate.take() {
            out.certificates.insert(format!("{key}/{i}"), to_value(&c));
        }
    }
}

/// Runs every configured task, writing artifacts under `res.out`. Returns the exit code.
pub fn run(res: &Resolved) -> Result<i32, CliError> {
    echo_config(res)?;
    if res.config.tasks.is_empty() {
        return Ok(0);
    }
    let mut ctx = Context { res, state: None, table: None, system: None };
    let mut out = Collected::default();
    for &task in &res.config.tasks {
        let result = match task {
            Task::Measure => measure(&mut ctx),
            Task::LearnA => learn_a(&mut ctx, &mut out),
            Task::Intervals => intervals(&mut ctx, &mut out),
            Task::LearnB => learn_b(&mut ctx, &mut out),
            Task::Certify => certify_task(&mut ctx, &mut out),
            Task::VerifyModular => verify_modular(&mut ctx),
            Task::Sweep => sweep(&ctx, &mut out),
        };
        match result {
            Ok(v) => {
                out.sections.insert(to_value(&task).as_str().unwrap().to_string(), v);
            }
            Err(e) => out.fail(task, e),
        }
    }
    if out.exit == 0 && out.solver_failure {
        out.exit = CliError::Solver(String::new()).code();
    }
    if res.config.dump_certificates {
        write_json(&res.out.join("certificates.json"), &out.certificates)?;
    }
    let report = json!({
        "model": { "n": res.model.n(), "m": res.model.m(), "terms": res.model.terms().iter().map(|p| p.letters()).collect::<Vec<_>>() },
        "level": res.config.level,
        "beta": res.beta(),
        "tasks": out.sections,
        "errors": out.errors,
        "exit_code": out.exit,
    });
    write_json(&res.out.join("report.json"), &report)?;
    for e in &out.errors {
        eprintln!("{e}");
    }
    Ok(out.exit)
}

fn measure(ctx: &mut Context) -> Result<Value, CliError> {
    let res = ctx.res;
    let out = res.out.clone();
    let table = ctx.table()?;
    table.write_csv(out.join("tables.csv")).map_err(lib_err)?;
    let (r, m, clipped, noise) = (table.r(), table.m(), table.clipped, table.noise.clone());
    let sys = ctx.system()?;
    sys.write_json(out.join("system.json")).map_err(lib_err)?;
    let bound = pkl_size_bound(&res.model, res.config.level);
    Ok(json!({
        "r": r,
        "m": m,
        "size_bound": bound,
        "noise": noise,
        "clipped": clipped,
        "cond_ok": sys.cond_ok,
        "eigen_floor": sys.eigen_floor,
        "k": sys.k,
    }))
}

fn learn_a(ctx: &mut Context, out: &mut Collected) -> Result<Value, CliError> {
    let opts = ctx.learn_options();
    let beta = ctx.res.beta();
    let eps = ctx.res.config.noise.epsilon0;
    let dirs = ctx.res.directions();
    let sys = ctx.system()?;
    let mut results: Vec<DirectionResult> = dirs
        .par_iter()
        .map(|v| algorithm_a(sys, v, eps, beta, &opts))
        .collect::<hamlearn::Result<_>>()
        .map_err(lib_err)?;
    take_certificates(&mut results, "learn_a", out);
    Ok(json!({ "epsilon0": eps, "beta": beta, "k": sys.k, "directions": results }))
}

fn intervals(ctx: &mut Context, out: &mut Collected) -> Result<Value, CliError> {
    let opts = ctx.learn_options();
    let beta = ctx.res.beta();
    let eps = ctx.res.config.noise.epsilon0;
    let truth = ctx.res.model.true_coeffs().map(<[f64]>::to_vec);
    let terms: Vec<String> = ctx.res.model.terms().iter().map(|p| p.letters()).collect();
    let path = ctx.res.out.join("intervals.csv");
    let sys = ctx.system()?;
    let mut rep = LearnReport::run(sys, eps, beta, false, &opts).map_err(lib_err)?;
    take_certificates(&mut rep.directions, "intervals", out);
    write_intervals(&path, &terms, &rep.directions, truth.as_deref())?;
    let contains = truth.as_ref().map(|t| rep.all_contain(t, 1e-6));
    let mut v = to_value(&rep);
    v["contains_truth"] = to_value(&contains);
    Ok(v)
}

#[derive(Serialize)]
struct IntervalRow<'a> {
    alpha: usize,
    term: &'a str,
    status: DirectionStatus,
    a: Option<f64>,
    b: Option<f64>,
    width: Option<f64>,
    box_active: bool,
    truth: Option<f64>,
    contains: Option<bool>,
}

fn write_intervals(path: &Path, terms: &[String], dirs: &[DirectionResult], truth: Option<&[f64]>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Other(e.to_string()))?;
    for (alpha, d) in dirs.iter().enumerate() {
        let t = truth.map(|t| t[alpha]);
        w.serialize(IntervalRow {
            alpha,
            term: &terms[alpha],
            status: d.status,
            a: d.a,
            b: d.b,
            width: d.width(),
            box_active: d.box_active,
            truth: t,
            contains: truth.map(|t| d.contains(t, 1e-6)),
        })
        .map_err(|e| CliError::Other(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Other(e.to_string()))
}

fn learn_b(ctx: &mut Context, out: &mut Collected) -> Result<Value, CliError> {
    let opts = ctx.learn_options();
    let lambda_box = opts.box_for(ctx.res.beta());
    let sys = ctx.system()?;
    if !sys.cond_ok {
        return Err(CliError::Solver(format!("C is not positive definite (smallest eigenvalue {:e})", sys.eigen_floor)));
    }
    let r = algorithm_b(sys, lambda_box, &opts.solver).map_err(lib_err)?;
    if r.status == SolveStatus::NumericalFailure {
        out.solver_failure = true;
    }
    Ok(to_value(&r))
}

fn certify_task(ctx: &mut Context, out: &mut Collected) -> Result<Value, CliError> {
    let opts = ctx.learn_options();
    let lambda_box = opts.box_for(ctx.res.beta());
    let sys = ctx.system()?;
    if !sys.cond_ok {
        return Err(CliError::Solver(format!("C is not positive definite (smallest eigenvalue {:e})", sys.eigen_floor)));
    }
    let mut c = certify(sys, lambda_box, &opts.solver).map_err(lib_err)?;
    if c.status == SolveStatus::NumericalFailure || c.algorithm_b.status == SolveStatus::NumericalFailure {
        out.solver_failure = true;
    }
    if let Some(cert) = c.certificate.take() {
        out.certificates.insert("certify".into(), to_value(&cert));
    }
    let verdict = match (c.status, c.check.as_ref().map(|k| k.valid)) {
        (SolveStatus::Infeasible, Some(true)) => "not_gibbs_in_span",
        (SolveStatus::Infeasible, _) => "infeasible_unverified",
        (SolveStatus::Optimal, _) => "consistent",
        _ => "undetermined",
    };
    let mut v = to_value(&c);
    v["verdict"] = json!(verdict);
    Ok(v)
}

fn verify_modular(ctx: &mut Context) -> Result<Value, CliError> {
    let model = ctx.res.model.clone();
    let lambda = model.true_coeffs().unwrap().to_vec();
    let ps = ctx.perturbers();
    let state = ctx.state()?.clone();
    let space = GnsSpace::new(&state).map_err(lib_err)?;
    let triple = build_modular(&space).map_err(lib_err)?;
    let identities = triple.verify(MODULAR_TOL);
    let ops = restricted_ops(&space, &triple, &ps).map_err(lib_err)?;
    let restricted = ops.verify(MODULAR_TOL);
    let h = model.hamiltonian_dense(&lambda).map_err(lib_err)?;
    let gibbs = gibbs_residual(&space, &triple, &h).map_err(lib_err)?;

    // compressions against the table-based construction
    let exact = assemble(&exact_tables(&state, &ps, model.terms()).map_err(lib_err)?);
    let d_res = spectral_norm(&(&exact.dtilde - &ops.dbold));
    let mut h_res = 0.0_f64;
    for (e, hb) in model.terms().iter().zip(&exact.htilde) {
        let big = hamlearn::modular::gns_hamiltonian(&space, &e.to_dense().map_err(lib_err)?).map_err(lib_err)?;
        h_res = h_res.max(spectral_norm(&(ops.compress(&big) - hb)));
    }
    let locality = if model.commuting_decomposition().is_some() && model.n() <= LOCALITY_MAX_QUBITS {
        let rep = verify_commuting_locality(&model, 1, &[1.0, 0.5, -0.5], None, true, MODULAR_TOL).map_err(lib_err)?;
        Some(json!({
            "level": rep.level,
            "degree": rep.degree,
            "r": rep.r,
            "support_pass": rep.support_pass(),
            "restricted_pass": rep.restricted_pass(),
            "checked": rep.entries.len(),
        }))
    } else {
        None
    };
    let pass = identities.pass()
        && restricted.pass()
        && gibbs <= MODULAR_TOL
        && d_res <= CROSS_TOL
        && h_res <= CROSS_TOL
        && locality.as_ref().is_none_or(|l| l["support_pass"] == true && l["restricted_pass"] == true);
    Ok(json!({
        "pass": pass,
        "identities": identities,
        "restricted": restricted,
        "gibbs_residual": gibbs,
        "cross_oracle": { "d_residual": d_res, "h_residual": h_res, "tol": CROSS_TOL },
        "locality": locality,
    }))
}

/// One cell of the sweep grid.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub epsilon0: f64,
    pub level: usize,
    pub seed: u64,
    pub r: usize,
    pub k: Option<f64>,
    pub guard_tripped: bool,
    pub status: String,
    pub max_width: Option<f64>,
    pub mean_width: Option<f64>,
    pub box_active: bool,
    pub contains: Option<bool>,
}

fn cell_noise(base: &NoiseSpec, epsilon0: f64, seed: u64) -> NoiseSpec {
    let mut n = base.clone();
    n.epsilon0 = epsilon0;
    n.seed = seed;
    if epsilon0 == 0.0 {
        n.mode = NoiseMode::Exact;
    } else if n.mode == NoiseMode::Exact {
        n.mode = NoiseMode::UniformAdversarial;
    }
    n
}

fn sweep_cell(res: &Resolved, state: &GibbsState, epsilon0: f64, level: usize, seed: u64) -> SweepRow {
    let mut row = SweepRow {
        epsilon0,
        level,
        seed,
        r: 0,
        k: None,
        guard_tripped: false,
        status: String::new(),
        max_width: None,
        mean_width: None,
        box_active: false,
        contains: None,
    };
    let ps = enumerate_pkl(&res.model, level);
    row.r = ps.len();
    let noise = cell_noise(&res.config.noise, epsilon0, seed);
    let table = match measure_tables(state, &ps, res.model.terms(), &noise) {
        Ok(t) => t,
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    };
    let sys = assemble(&table);
    row.k = sys.k;
    let opts = LearnOptions {
        solver: SolverOptions { tol: res.config.tol, ..SolverOptions::default() },
        box_factor: res.config.box_factor,
        lambda_box: None,
        keep_certificates: false,
    };
    // cells already run in parallel
    let rep = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())
        .and_then(|pool| pool.install(|| LearnReport::run(&sys, epsilon0, res.beta(), false, &opts)).map_err(|e| e.to_string()));
    match rep {
        Ok(rep) => {
            row.guard_tripped = rep.guard_tripped;
            let worst = rep
                .directions
                .iter()
                .map(|d| d.status)
                .max_by_key(|s| match s {
                    DirectionStatus::Optimal => 0,
                    DirectionStatus::Unbounded => 1,
                    DirectionStatus::Infeasible => 2,
                    DirectionStatus::NumericalFailure => 3,
                })
                .unwrap_or(DirectionStatus::Optimal);
            row.status = to_value(&worst).as_str().unwrap().to_string();
            row.max_width = rep.max_width();
            let widths: Option<Vec<f64>> = rep.directions.iter().map(|d| d.width()).collect();
            row.mean_width = widths.filter(|w| !w.is_empty()).map(|w| w.iter().sum::<f64>() / w.len() as f64);
            row.box_active = rep.directions.iter().any(|d| d.box_active);
            row.contains = res.model.true_coeffs().filter(|_| !rep.guard_tripped).map(|t| rep.all_contain(t, 1e-6));
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

fn sweep(ctx: &Context, out: &mut Collected) -> Result<Value, CliError> {
    let res = ctx.res;
    let grid = res.config.sweep.clone().ok_or_else(|| CliError::Config("missing sweep grid".into()))?;
    let lambda = res.model.true_coeffs().unwrap();
    let state = build_gibbs(&res.model, lambda).map_err(lib_err)?;
    let mut cells = Vec::new();
    for &e in &grid.epsilon0 {
        for &l in &grid.levels {
            for &s in &grid.seeds {
                cells.push((e, l, s));
            }
        }
    }
    let rows: Vec<SweepRow> = cells.par_iter().map(|&(e, l, s)| sweep_cell(res, &state, e, l, s)).collect();
    let mut w = csv::Writer::from_path(res.out.join("sweep.csv")).map_err(|e| CliError::Other(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Other(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Other(e.to_string()))?;
    let failed = rows.iter().filter(|r| r.status != "optimal" && r.status != "unbounded").count();
    if rows.iter().any(|r| r.status == "numerical_failure") {
        out.solver_failure = true;
    }
    plot::width_vs_epsilon(&res.out.join("width_vs_epsilon.svg"), &rows).map_err(CliError::Other)?;
    plot::width_vs_level(&res.out.join("width_vs_level.svg"), &rows).map_err(CliError::Other)?;
    Ok(json!({ "cells": rows.len(), "not_optimal": failed, "rows": rows }))
}
