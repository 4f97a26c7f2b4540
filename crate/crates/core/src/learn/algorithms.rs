//! Certified intervals for linear functionals of the coefficients and the
//! minimal relaxation consistent with the measured tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eeb::{relaxation_params, EEBSystem};
use crate::error::{Error, Result};
use crate::linalg::{antihermitian_part, hermitian_part, CMat, I};

use super::lmi::{Certificate, CertificateCheck, HermitianAffine, LmiProblem, Sense};
use super::solver::{LmiSolution, Prepared, SolveStats, SolveStatus, SolverOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnOptions {
    pub solver: SolverOptions,
    /// Box half-width as a multiple of `β`.
    pub box_factor: f64,
    /// Explicit box half-width, overriding `box_factor`.
    pub lambda_box: Option<f64>,
    /// Keep dual certificates in reports.
    pub keep_certificates: bool,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self { solver: SolverOptions::default(), box_factor: 10.0, lambda_box: None, keep_certificates: true }
    }
}

impl LearnOptions {
    /// `box_factor·β`, or `box_factor` when `β = 0`.
    pub fn box_for(&self, beta: f64) -> f64 {
        self.lambda_box.unwrap_or(if beta > 0.0 { self.box_factor * beta } else { self.box_factor })
    }
}

/// Constraint blocks at fixed `μ1`, `μ2`: `[B0, B+, B−]`.
pub fn build_constraints(sys: &EEBSystem, mu1: f64, mu2: f64) -> Result<Vec<HermitianAffine>> {
    if !sys.cond_ok {
        return Err(Error::NotPositiveDefinite(sys.eigen_floor));
    }
    let r = sys.r;
    let id = CMat::identity(r, r);
    let sym: Vec<CMat> = sys.htilde.iter().map(hermitian_part).collect();
    // i(H − H†)/2 is Hermitian
    let skew: Vec<CMat> = sys.htilde.iter().map(|h| antihermitian_part(h) * I).collect();
    let b0 = HermitianAffine::new(&sys.log_dtilde + id.scale(mu1), sym)?;
    let bp = HermitianAffine::new(id.scale(mu2), skew.iter().map(|s| -s).collect())?;
    let bm = HermitianAffine::new(id.scale(mu2), skew)?;
    Ok(vec![b0, bp, bm])
}

/// The feasible set of `λ′` with the `B±` pair as an equality when `μ2 = 0`.
fn feasibility_problem(sys: &EEBSystem, mu1: f64, mu2: f64, lambda_box: f64) -> Result<LmiProblem> {
    let blocks = build_constraints(sys, mu1, mu2)?;
    let m = sys.m;
    let mut p = LmiProblem::new(m, Sense::Minimize);
    let mut it = blocks.into_iter();
    p.psd_blocks.push(it.next().unwrap());
    let bp = it.next().unwrap();
    let bm = it.next().unwrap();
    if mu2 == 0.0 {
        p.equalities.push(bm);
    } else {
        p.psd_blocks.push(bp);
        p.psd_blocks.push(bm);
    }
    p.lower = vec![Some(-lambda_box); m];
    p.upper = vec![Some(lambda_box); m];
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionStatus {
    Optimal,
    Infeasible,
    /// Interval `[−∞, +∞]`: either the guard tripped or the objective is unbounded.
    Unbounded,
    NumericalFailure,
}

impl From<SolveStatus> for DirectionStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => Self::Optimal,
            SolveStatus::Infeasible => Self::Infeasible,
            SolveStatus::Unbounded => Self::Unbounded,
            SolveStatus::NumericalFailure => Self::NumericalFailure,
        }
    }
}

/// Interval `[a, b]` for `v·λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionResult {
    pub v: Vec<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub status: DirectionStatus,
    pub lower_status: Option<SolveStatus>,
    pub upper_status: Option<SolveStatus>,
    /// `C̃` was not positive definite or `K > 1/ε0`.
    pub guard_tripped: bool,
    pub box_active: bool,
    pub iterations: usize,
    pub stats: SolveStats,
    pub phase1: SolveStats,
    pub relaxation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl DirectionResult {
    fn sentinel(v: &[f64]) -> Self {
        Self {
            v: v.to_vec(),
            a: None,
            b: None,
            status: DirectionStatus::Unbounded,
            lower_status: None,
            upper_status: None,
            guard_tripped: true,
            box_active: false,
            iterations: 0,
            stats: SolveStats::default(),
            phase1: SolveStats::default(),
            relaxation: 0.0,
            certificate: None,
            message: None,
        }
    }

    fn from_pair(v: &[f64], lo: LmiSolution, hi: LmiSolution, keep_cert: bool) -> Self {
        let status = match (lo.status, hi.status) {
            (SolveStatus::Infeasible, _) | (_, SolveStatus::Infeasible) => DirectionStatus::Infeasible,
            (SolveStatus::NumericalFailure, _) | (_, SolveStatus::NumericalFailure) => DirectionStatus::NumericalFailure,
            (SolveStatus::Unbounded, _) | (_, SolveStatus::Unbounded) => DirectionStatus::Unbounded,
            _ => DirectionStatus::Optimal,
        };
        let worse = |a: f64, b: f64| a.max(b);
        let stats = SolveStats {
            iterations: lo.stats.iterations + hi.stats.iterations,
            primal_residual: worse(lo.stats.primal_residual, hi.stats.primal_residual),
            dual_residual: worse(lo.stats.dual_residual, hi.stats.dual_residual),
            gap: worse(lo.stats.gap, hi.stats.gap),
        };
        let optimal = status == DirectionStatus::Optimal;
        Self {
            v: v.to_vec(),
            a: if optimal { lo.objective } else { None },
            b: if optimal { hi.objective } else { None },
            status,
            lower_status: Some(lo.status),
            upper_status: Some(hi.status),
            guard_tripped: false,
            box_active: lo.bound_active || hi.bound_active,
            iterations: stats.iterations,
            stats,
            phase1: lo.phase1.clone(),
            relaxation: lo.relaxation.max(hi.relaxation),
            certificate: if keep_cert { lo.certificate.or(hi.certificate) } else { None },
            message: lo.message.or(hi.message),
        }
    }

    pub fn width(&self) -> Option<f64> {
        Some(self.b? - self.a?)
    }

    /// `a − slack ≤ v·λ ≤ b + slack`.
    pub fn contains(&self, lambda: &[f64], slack: f64) -> bool {
        let (Some(a), Some(b)) = (self.a, self.b) else { return false };
        let t: f64 = self.v.iter().zip(lambda).map(|(x, y)| x * y).sum();
        a - slack <= t && t <= b + slack
    }
}

fn guard_trips(sys: &EEBSystem, epsilon0: f64) -> bool {
    match sys.k {
        None => true,
        Some(k) => !sys.cond_ok || k * epsilon0 > 1.0,
    }
}

fn solve_pair(prep: &Prepared, v: &[f64], keep_cert: bool) -> DirectionResult {
    let lo = prep.solve(v, Sense::Minimize);
    // one infeasibility verdict covers both ends
    let hi = if lo.status == SolveStatus::Infeasible { lo.clone() } else { prep.solve(v, Sense::Maximize) };
    DirectionResult::from_pair(v, lo, hi, keep_cert)
}

/// Minimum and maximum of `v·λ′` over the relaxed constraints with the
/// relaxation derived from `ε0` and `β`.
pub fn algorithm_a(sys: &EEBSystem, v: &[f64], epsilon0: f64, beta: f64, opts: &LearnOptions) -> Result<DirectionResult> {
    check_direction(sys, v)?;
    if guard_trips(sys, epsilon0) {
        return Ok(DirectionResult::sentinel(v));
    }
    let (mu1, mu2) = relaxation_params(sys.k.unwrap(), epsilon0, sys.m, beta);
    algorithm_a_with(sys, v, mu1, mu2, opts.box_for(beta), opts)
}

/// As [`algorithm_a`] with explicit `μ1`, `μ2` and box, and no guard.
pub fn algorithm_a_with(
    sys: &EEBSystem,
    v: &[f64],
    mu1: f64,
    mu2: f64,
    lambda_box: f64,
    opts: &LearnOptions,
) -> Result<DirectionResult> {
    check_direction(sys, v)?;
    if !sys.cond_ok {
        return Ok(DirectionResult::sentinel(v));
    }
    let p = feasibility_problem(sys, mu1, mu2, lambda_box)?;
    let prep = Prepared::new(&p, &opts.solver);
    Ok(solve_pair(&prep, v, opts.keep_certificates))
}

fn check_direction(sys: &EEBSystem, v: &[f64]) -> Result<()> {
    if v.len() != sys.m {
        return Err(Error::DimensionMismatch { expected: sys.m, found: v.len() });
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// Intervals `[a_α, b_α]` for every coefficient, sharing one feasibility
/// analysis across the `2m` solves.
pub fn coefficient_intervals(
    sys: &EEBSystem,
    epsilon0: f64,
    beta: f64,
    opts: &LearnOptions,
) -> Result<Vec<DirectionResult>> {
    let m = sys.m;
    let basis = |a: usize| -> Vec<f64> { (0..m).map(|i| if i == a { 1.0 } else { 0.0 }).collect() };
    if guard_trips(sys, epsilon0) {
        return Ok((0..m).map(|a| DirectionResult::sentinel(&basis(a))).collect());
    }
    let (mu1, mu2) = relaxation_params(sys.k.unwrap(), epsilon0, m, beta);
    Ok(intervals_with(sys, mu1, mu2, opts.box_for(beta), opts)?)
}

fn intervals_with(sys: &EEBSystem, mu1: f64, mu2: f64, lambda_box: f64, opts: &LearnOptions) -> Result<Vec<DirectionResult>> {
    let m = sys.m;
    let p = feasibility_problem(sys, mu1, mu2, lambda_box)?;
    let prep = Prepared::new(&p, &opts.solver);
    let basis = |a: usize| -> Vec<f64> { (0..m).map(|i| if i == a { 1.0 } else { 0.0 }).collect() };
    let solves: Vec<LmiSolution> = (0..2 * m)
        .into_par_iter()
        .map(|k| {
            let sense = if k % 2 == 0 { Sense::Minimize } else { Sense::Maximize };
            prep.solve(&basis(k / 2), sense)
        })
        .collect();
    let mut it = solves.into_iter();
    let mut out = Vec::with_capacity(m);
    for a in 0..m {
        let lo = it.next().unwrap();
        let hi = it.next().unwrap();
        out.push(DirectionResult::from_pair(&basis(a), lo, hi, opts.keep_certificates));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmBResult {
    pub status: SolveStatus,
    pub mu_star: Option<f64>,
    pub lambda_star: Option<Vec<f64>>,
    pub box_active: bool,
    pub stats: SolveStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Smallest `μ ≥ 0` with `B0(λ′) ⪰ 0` at `μ1 = μ` and `B± ⪰ 0` at `μ2 = μ`.
/// The variable vector is `(λ′, μ)`.
pub fn algorithm_b(sys: &EEBSystem, lambda_box: f64, opts: &SolverOptions) -> Result<AlgorithmBResult> {
    let blocks = build_constraints(sys, 0.0, 0.0)?;
    let m = sys.m;
    let id = CMat::identity(sys.r, sys.r);
    let mut p = LmiProblem::new(m + 1, Sense::Minimize);
    for b in blocks {
        let mut coeffs = b.coeffs;
        coeffs.push(id.clone());
        p.psd_blocks.push(HermitianAffine { constant: b.constant, coeffs });
    }
    p.objective[m] = 1.0;
    for a in 0..m {
        p.lower[a] = Some(-lambda_box);
        p.upper[a] = Some(lambda_box);
    }
    p.lower[m] = Some(0.0);
    let sol = Prepared::new(&p, opts).solve(&p.objective, Sense::Minimize);
    let (mu_star, lambda_star) = match &sol.x {
        Some(x) if sol.status == SolveStatus::Optimal => (Some(x[m].max(0.0)), Some(x[..m].to_vec())),
        _ => (None, None),
    };
    let box_active = lambda_star.as_ref().is_some_and(|l| l.iter().any(|v| lambda_box - v.abs() <= 1e-6 * (1.0 + lambda_box)));
    Ok(AlgorithmBResult { status: sol.status, mu_star, lambda_star, box_active, stats: sol.stats, message: sol.message })
}

/// Outcome of testing the tables for consistency with a Gibbs state of the ansatz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    /// `Infeasible` means the tables cannot come from a Gibbs state in the span of the terms.
    pub status: SolveStatus,
    pub certificate: Option<Certificate>,
    pub check: Option<CertificateCheck>,
    pub algorithm_b: AlgorithmBResult,
}

/// Feasibility of the unrelaxed constraints (`μ1 = μ2 = 0`), with the dual
/// certificate checked independently when infeasible, plus Algorithm B.
pub fn certify(sys: &EEBSystem, lambda_box: f64, opts: &SolverOptions) -> Result<Certification> {
    let p = feasibility_problem(sys, 0.0, 0.0, lambda_box)?;
    let sol = Prepared::new(&p, opts).solve(&vec![0.0; sys.m], Sense::Minimize);
    let check = sol.certificate.as_ref().map(|c| c.verify(&p, CERTIFICATE_TOL));
    Ok(Certification { status: sol.status, certificate: sol.certificate, check, algorithm_b: algorithm_b(sys, lambda_box, opts)? })
}

/// Relative tolerance used when checking dual certificates.
pub const CERTIFICATE_TOL: f64 = 1e-7;

/// Everything a learning run produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub r: usize,
    pub m: usize,
    pub epsilon0: f64,
    pub beta: f64,
    pub k: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub lambda_box: f64,
    pub guard_tripped: bool,
    pub directions: Vec<DirectionResult>,
    pub algorithm_b: Option<AlgorithmBResult>,
}

impl LearnReport {
    /// Per-coefficient intervals plus, optionally, Algorithm B.
    pub fn run(sys: &EEBSystem, epsilon0: f64, beta: f64, with_b: bool, opts: &LearnOptions) -> Result<Self> {
        let guard = guard_trips(sys, epsilon0);
        let (mu1, mu2) = match (guard, sys.k) {
            (false, Some(k)) => {
                let (a, b) = relaxation_params(k, epsilon0, sys.m, beta);
                (Some(a), Some(b))
            }
            _ => (None, None),
        };
        let lambda_box = opts.box_for(beta);
        let directions = coefficient_intervals(sys, epsilon0, beta, opts)?;
        let algorithm_b = if with_b && sys.cond_ok { Some(algorithm_b(sys, lambda_box, &opts.solver)?) } else { None };
        Ok(Self {
            r: sys.r,
            m: sys.m,
            epsilon0,
            beta,
            k: sys.k,
            mu1,
            mu2,
            lambda_box,
            guard_tripped: guard,
            directions,
            algorithm_b,
        })
    }

    pub fn all_contain(&self, lambda: &[f64], slack: f64) -> bool {
        self.directions.iter().all(|d| d.contains(lambda, slack))
    }

    pub fn max_width(&self) -> Option<f64> {
        self.directions.iter().map(|d| d.width()).try_fold(0.0_f64, |acc, w| Some(acc.max(w?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eeb::assemble;
    use crate::linalg::{eigvalsh, min_eigenvalue};
    use crate::model::{enumerate_pkl, HamiltonianModel};
    use crate::oracle::{build_gibbs, exact_tables};
    use crate::pauli::PauliString;

    fn system(terms: &[&str], truth: &[&str], coeffs: &[f64], perturbers: &[&str]) -> EEBSystem {
        let n = terms[0].len();
        let ansatz = HamiltonianModel::new(n, terms.iter().map(|t| t.parse().unwrap()).collect()).unwrap();
        let gen = HamiltonianModel::new(n, truth.iter().map(|t| t.parse().unwrap()).collect()).unwrap();
        let s = build_gibbs(&gen, coeffs).unwrap();
        let ps: Vec<PauliString> = perturbers.iter().map(|p| p.parse().unwrap()).collect();
        assemble(&exact_tables(&s, &ps, ansatz.terms()).unwrap())
    }

    fn single_qubit() -> EEBSystem {
        let ln2 = std::f64::consts::LN_2;
        system(&["Z"], &["Z"], &[ln2], &["I", "X", "Y", "Z"])
    }

    #[test]
    fn blocks_psd_at_truth_on_exact_tables() {
        let m = HamiltonianModel::ising_chain(3, 0.4, -0.3).unwrap();
        let lambda = vec![0.4, 0.4, -0.3, -0.3, -0.3];
        let s = build_gibbs(&m, &lambda).unwrap();
        let sys = assemble(&exact_tables(&s, &enumerate_pkl(&m, 1), m.terms()).unwrap());
        for b in build_constraints(&sys, 0.0, 0.0).unwrap() {
            let e = min_eigenvalue(&b.eval(&lambda));
            assert!(e > -1e-9, "{e}");
        }
        // B+ and B− are negatives of each other at μ2 = 0
        let blocks = build_constraints(&sys, 0.0, 0.0).unwrap();
        let s = &blocks[1].eval(&lambda) + &blocks[2].eval(&lambda);
        assert!(eigvalsh(&s).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_direction_gives_zero_interval() {
        let sys = single_qubit();
        let r = algorithm_a(&sys, &[0.0], 1e-6, std::f64::consts::LN_2, &LearnOptions::default()).unwrap();
        assert_eq!(r.status, DirectionStatus::Optimal);
        assert!(r.a.unwrap().abs() < 1e-9 && r.b.unwrap().abs() < 1e-9);
    }

    #[test]
    fn single_qubit_interval_contains_truth() {
        let sys = single_qubit();
        let ln2 = std::f64::consts::LN_2;
        let r = algorithm_a(&sys, &[1.0], 1e-6, ln2, &LearnOptions::default()).unwrap();
        assert_eq!(r.status, DirectionStatus::Optimal);
        assert!(r.contains(&[ln2], 1e-6), "{r:?}");
        assert!(!r.box_active);
        // noiseless run pins the coefficient
        let exact = algorithm_a(&sys, &[1.0], 0.0, ln2, &LearnOptions::default()).unwrap();
        assert!(exact.contains(&[ln2], 1e-6));
        assert!(exact.width().unwrap() < 1e-5, "{exact:?}");
        assert!(exact.width().unwrap() < r.width().unwrap());
    }

    #[test]
    fn guard_returns_sentinel() {
        let sys = single_qubit();
        // K = 20, so ε0 = 0.1 exceeds 1/K
        let r = algorithm_a(&sys, &[1.0], 0.1, 1.0, &LearnOptions::default()).unwrap();
        assert!(r.guard_tripped);
        assert_eq!(r.status, DirectionStatus::Unbounded);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"a\":null"));
    }

    #[test]
    fn out_of_span_state_is_certified_infeasible() {
        let sys = system(&["Z"], &["X"], &[0.7], &["I", "X", "Y", "Z"]);
        let p = feasibility_problem(&sys, 0.0, 0.0, 7.0).unwrap();
        let r = algorithm_a_with(&sys, &[1.0], 0.0, 0.0, 7.0, &LearnOptions::default()).unwrap();
        assert_eq!(r.status, DirectionStatus::Infeasible, "{r:?}");
        let check = r.certificate.unwrap().verify(&p, 1e-7);
        assert!(check.valid, "{check:?}");
    }

    #[test]
    fn algorithm_b_recovers_coefficient() {
        let sys = single_qubit();
        let r = algorithm_b(&sys, 10.0, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(r.mu_star.unwrap() <= 1e-6, "{r:?}");
        assert!((r.lambda_star.unwrap()[0] - std::f64::consts::LN_2).abs() < 1e-4);
    }

    #[test]
    fn algorithm_b_maximally_mixed() {
        let sys = system(&["ZI", "IZ", "XX"], &["ZZ"], &[0.0], &["II", "XI", "ZI", "IX", "IZ", "XX"]);
        let r = algorithm_b(&sys, 10.0, &SolverOptions::default()).unwrap();
        assert!(r.mu_star.unwrap() < 1e-7, "{r:?}");
        let (anti, floor) = sys.ideal_residuals(&[0.0; 3]);
        assert!(anti < 1e-12 && floor > -1e-12);
    }

    #[test]
    fn algorithm_b_out_of_span_floor() {
        let sys = system(&["Z"], &["X"], &[0.7], &["I", "X", "Y", "Z"]);
        let r = algorithm_b(&sys, 10.0, &SolverOptions::default()).unwrap();
        assert!(r.mu_star.unwrap() > 1e-2, "{r:?}");
    }

    #[test]
    fn grid_search_matches_two_variable_optimum() {
        // two-term ansatz on one qubit; the true state uses both terms
        let sys = system(&["X", "Z"], &["X", "Z"], &[0.3, -0.5], &["I", "X", "Y", "Z"]);
        let (mu1, mu2) = (0.05, 0.01);
        let opts = LearnOptions::default();
        let p = feasibility_problem(&sys, mu1, mu2, 5.0).unwrap();
        let v = [0.6, -0.4];
        let r = algorithm_a_with(&sys, &v, mu1, mu2, 5.0, &opts).unwrap();
        assert_eq!(r.status, DirectionStatus::Optimal);
        // feasible points never leave the computed interval, and zoomed grid
        // refinement around the best point approaches both ends
        let feasible = |x: &[f64; 2]| p.violation(x).0 >= 0.0;
        let value = |x: &[f64; 2]| v[0] * x[0] + v[1] * x[1];
        let extreme = |sign: f64| {
            let (mut center, mut half) = ([0.3, -0.5], 0.4);
            let mut best = f64::NEG_INFINITY;
            for _ in 0..6 {
                let n = 60;
                let mut next = center;
                for i in 0..=n {
                    for j in 0..=n {
                        let x = [
                            center[0] + half * (2.0 * i as f64 / n as f64 - 1.0),
                            center[1] + half * (2.0 * j as f64 / n as f64 - 1.0),
                        ];
                        if feasible(&x) && sign * value(&x) > best {
                            best = sign * value(&x);
                            next = x;
                        }
                    }
                }
                center = next;
                half /= 10.0;
            }
            sign * best
        };
        let (lo, hi) = (extreme(-1.0), extreme(1.0));
        let (a, b) = (r.a.unwrap(), r.b.unwrap());
        assert!(lo >= a - 1e-6 && hi <= b + 1e-6, "grid [{lo}, {hi}] vs [{a}, {b}]");
        assert!((lo - a).abs() < 1e-4 && (hi - b).abs() < 1e-4, "grid [{lo}, {hi}] vs [{a}, {b}]");
    }
}
