//! Primal-dual interior-point method for Hermitian LMIs.
//!
//! Problems are brought to the form `min c·y` s.t. `Z = F_0 + Σ y_i F_i ⪰ 0`
//! over a list of Hermitian blocks and a diagonal block of scalar rows. The
//! iteration is an infeasible-start HKM method with Mehrotra's
//! predictor-corrector. Equality blocks are eliminated beforehand through an
//! SVD, so the remaining variables parametrize the affine solution set.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};
use serde::{Deserialize, Serialize};

use crate::linalg::{cmatmul, eigvalsh, frobenius, hermitian_part, hermitian_norm, min_eigenvalue, trace_product, CMat, Eigh};

use super::lmi::{Certificate, LmiProblem, Sense};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative tolerance on primal and dual residuals and on the gap.
    pub tol: f64,
    /// Phase-I threshold above which the problem is declared infeasible.
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Relative singular-value cutoff when eliminating equalities.
    pub eq_rank_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, feas_tol: 1e-7, max_iter: 150, eq_rank_tol: 1e-7 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmiSolution {
    pub status: SolveStatus,
    pub x: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub stats: SolveStats,
    /// Phase-I statistics, shared by every objective solved on the same constraints.
    pub phase1: SolveStats,
    /// Uniform shift added to every block to guarantee an interior.
    pub relaxation: f64,
    /// Smallest eigenvalue over the original PSD blocks at `x`.
    pub min_block_eigenvalue: Option<f64>,
    /// Some variable bound is active at `x`.
    pub bound_active: bool,
    pub certificate: Option<Certificate>,
    /// Number of PSD blocks proven redundant over the bound box and dropped.
    pub dropped_blocks: usize,
    pub message: Option<String>,
}

impl LmiSolution {
    fn failed(status: SolveStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            x: None,
            objective: None,
            stats: SolveStats::default(),
            phase1: SolveStats::default(),
            relaxation: 0.0,
            min_block_eigenvalue: None,
            bound_active: false,
            certificate: None,
            dropped_blocks: 0,
            message: Some(message.into()),
        }
    }
}

/// Coefficient matrix with cheap special cases.
#[derive(Clone, Debug)]
enum Coef {
    Zero,
    Identity(f64),
    Dense(CMat),
}

impl Coef {
    fn classify(a: CMat) -> Self {
        let n = a.nrows();
        if a.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
            return Coef::Zero;
        }
        let d = a[(0, 0)];
        let scalar = d.im == 0.0
            && (0..n).all(|i| (0..n).all(|j| if i == j { a[(i, j)] == d } else { a[(i, j)].norm() == 0.0 }));
        if scalar {
            Coef::Identity(d.re)
        } else {
            Coef::Dense(a)
        }
    }

    fn add_to(&self, out: &mut CMat, w: f64) {
        match self {
            Coef::Zero => {}
            Coef::Identity(s) => {
                for i in 0..out.nrows() {
                    out[(i, i)].re += w * s;
                }
            }
            Coef::Dense(a) => out.zip_apply(a, |o, v| *o += v * w),
        }
    }

    /// `Re tr(F T)`.
    fn inner(&self, t: &CMat) -> f64 {
        match self {
            Coef::Zero => 0.0,
            Coef::Identity(s) => s * t.trace().re,
            Coef::Dense(a) => trace_product(a, t),
        }
    }

    fn norm(&self, n: usize) -> f64 {
        match self {
            Coef::Zero => 0.0,
            Coef::Identity(s) => s.abs() * (n as f64).sqrt(),
            Coef::Dense(a) => frobenius(a),
        }
    }

    fn spectral(&self) -> f64 {
        match self {
            Coef::Zero => 0.0,
            Coef::Identity(s) => s.abs(),
            Coef::Dense(a) => hermitian_norm(a),
        }
    }
}

#[derive(Clone, Debug)]
struct Block {
    f0: CMat,
    f: Vec<Coef>,
    /// Index into the original PSD block list, `None` for internal blocks.
    origin: Option<usize>,
}

impl Block {
    fn n(&self) -> usize {
        self.f0.nrows()
    }

    fn eval(&self, y: &[f64]) -> CMat {
        let mut out = self.f0.clone();
        for (c, &v) in self.f.iter().zip(y) {
            c.add_to(&mut out, v);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum RowOrigin {
    Lower(usize),
    Upper(usize),
    Internal,
}

/// Standard-form data: `min c·y` with every block and row of `F_0 + Σ y_i F_i` nonnegative.
#[derive(Clone, Debug)]
struct Sdp {
    c: Vec<f64>,
    blocks: Vec<Block>,
    lp0: DVector<f64>,
    /// rows × p
    lpa: DMatrix<f64>,
    rows: Vec<RowOrigin>,
}

impl Sdp {
    fn p(&self) -> usize {
        self.c.len()
    }

    fn lp_eval(&self, y: &[f64]) -> DVector<f64> {
        &self.lp0 + &self.lpa * DVector::from_column_slice(y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum IpmStatus {
    Optimal,
    Unbounded,
    Failure,
}

struct IpmOutcome {
    status: IpmStatus,
    y: Vec<f64>,
    x: Vec<CMat>,
    xl: DVector<f64>,
    stats: SolveStats,
    message: Option<String>,
}

fn chol(a: &CMat) -> Option<Cholesky<num_complex::Complex64, Dyn>> {
    Cholesky::new(hermitian_part(a))
}

fn lower_inverse(c: &Cholesky<num_complex::Complex64, Dyn>) -> Option<CMat> {
    let l = c.l();
    let n = l.nrows();
    l.solve_lower_triangular(&CMat::identity(n, n))
}

/// Largest step `α ≤ 1/γ`-scaled with `X + αΔX ⪰ 0`, given `L^{-1}` of `X = LL†`.
fn max_step(linv: &CMat, dx: &CMat) -> f64 {
    let t = cmatmul(&cmatmul(linv, dx), &linv.adjoint());
    let lmin = eigvalsh(&t).iter().copied().fold(f64::INFINITY, f64::min);
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    let mut a = f64::INFINITY;
    for (v, d) in x.iter().zip(dx.iter()) {
        if *d < 0.0 {
            a = a.min(-v / d);
        }
    }
    a
}

fn ipm(sdp: &Sdp, opts: &SolverOptions) -> IpmOutcome {
    let p = sdp.p();
    let nrows = sdp.lp0.len();
    let ntot: usize = sdp.blocks.iter().map(|b| b.n()).sum::<usize>() + nrows;
    let c = DVector::from_column_slice(&sdp.c);
    let cnorm = c.norm();
    let f0norm = (sdp.blocks.iter().map(|b| frobenius(&b.f0).powi(2)).sum::<f64>() + sdp.lp0.norm_squared()).sqrt();

    // Infeasible starting point X = ξI, Z = ηI.
    let start = |n: usize, f0n: f64, fnorms: &[f64]| -> (f64, f64) {
        let sn = (n as f64).sqrt();
        let mut xi = 10.0_f64.max(sn);
        let mut eta = 10.0_f64.max(sn).max(f0n);
        for (i, fnorm) in fnorms.iter().enumerate() {
            xi = xi.max(n as f64 * (1.0 + sdp.c[i].abs()) / (1.0 + fnorm));
            eta = eta.max(*fnorm);
        }
        (xi, eta / sn.max(1.0) * 1.0_f64.max(sn / 10.0))
    };
    let mut x: Vec<CMat> = Vec::with_capacity(sdp.blocks.len());
    let mut z: Vec<CMat> = Vec::with_capacity(sdp.blocks.len());
    for b in &sdp.blocks {
        let n = b.n();
        let norms: Vec<f64> = b.f.iter().map(|f| f.norm(n)).collect();
        let (xi, eta) = start(n, frobenius(&b.f0), &norms);
        x.push(CMat::identity(n, n).scale(xi));
        z.push(CMat::identity(n, n).scale(eta));
    }
    let (mut xl, mut zl) = if nrows > 0 {
        let norms: Vec<f64> = (0..p).map(|i| sdp.lpa.column(i).norm()).collect();
        let (xi, eta) = start(nrows, sdp.lp0.norm(), &norms);
        (DVector::from_element(nrows, xi), DVector::from_element(nrows, eta))
    } else {
        (DVector::zeros(0), DVector::zeros(0))
    };
    let mut y = vec![0.0; p];
    let mut stats = SolveStats::default();
    let mut stalls = 0;

    for it in 0..opts.max_iter {
        stats.iterations = it;
        // residuals
        let rd: Vec<CMat> = sdp.blocks.iter().zip(&z).map(|(b, zb)| b.eval(&y) - zb).collect();
        let rdl = sdp.lp_eval(&y) - &zl;
        let mut rp = c.clone();
        for i in 0..p {
            let mut s = 0.0;
            for (b, xb) in sdp.blocks.iter().zip(&x) {
                s += b.f[i].inner(xb);
            }
            s += sdp.lpa.column(i).dot(&xl);
            rp[i] -= s;
        }
        let gap: f64 = x.iter().zip(&z).map(|(a, b)| trace_product(a, b)).sum::<f64>() + xl.dot(&zl);
        let mu = gap / ntot as f64;
        let pobj = c.dot(&DVector::from_column_slice(&y));
        let dobj = -(sdp.blocks.iter().zip(&x).map(|(b, xb)| trace_product(&b.f0, xb)).sum::<f64>() + sdp.lp0.dot(&xl));
        let dres = (rd.iter().map(|r| frobenius(r).powi(2)).sum::<f64>() + rdl.norm_squared()).sqrt();
        stats.primal_residual = rp.norm() / (1.0 + cnorm);
        stats.dual_residual = dres / (1.0 + f0norm);
        stats.gap = gap.abs() / (1.0 + pobj.abs() + dobj.abs());
        if !(pobj.is_finite() && dobj.is_finite() && gap.is_finite()) {
            return IpmOutcome { status: IpmStatus::Failure, y, x, xl, stats, message: Some("non-finite iterate".into()) };
        }
        if stats.primal_residual <= opts.tol && stats.dual_residual <= opts.tol && stats.gap <= opts.tol {
            return IpmOutcome { status: IpmStatus::Optimal, y, x, xl, stats, message: None };
        }
        if y.iter().any(|v| v.abs() > 1e12) && stats.dual_residual <= opts.tol.sqrt() {
            return IpmOutcome { status: IpmStatus::Unbounded, y, x, xl, stats, message: None };
        }

        // factorizations
        let mut zinv = Vec::with_capacity(z.len());
        let mut lz = Vec::with_capacity(z.len());
        let mut lx = Vec::with_capacity(x.len());
        for (xb, zb) in x.iter().zip(&z) {
            let (Some(cz), Some(cx)) = (chol(zb), chol(xb)) else {
                return IpmOutcome { status: IpmStatus::Failure, y, x, xl, stats, message: Some("lost positive definiteness".into()) };
            };
            let (Some(lzi), Some(lxi)) = (lower_inverse(&cz), lower_inverse(&cx)) else {
                return IpmOutcome { status: IpmStatus::Failure, y, x, xl, stats, message: Some("singular factor".into()) };
            };
            zinv.push(hermitian_part(&cmatmul(&lzi.adjoint(), &lzi)));
            lz.push(lzi);
            lx.push(lxi);
        }

        // Schur complement M_ij = Re tr(F_i X F_j Z^{-1})
        let mut m = DMatrix::<f64>::zeros(p, p);
        for (bi, b) in sdp.blocks.iter().enumerate() {
            let xz = cmatmul(&x[bi], &zinv[bi]);
            for j in 0..p {
                let g = match &b.f[j] {
                    Coef::Zero => continue,
                    Coef::Identity(s) => xz.scale(*s),
                    Coef::Dense(a) => cmatmul(&cmatmul(&x[bi], a), &zinv[bi]),
                };
                for i in 0..=j {
                    let v = b.f[i].inner(&g);
                    m[(i, j)] += v;
                    if i != j {
                        m[(j, i)] += v;
                    }
                }
            }
        }
        if nrows > 0 {
            let mut scaled = sdp.lpa.clone();
            for r in 0..nrows {
                let w = xl[r] / zl[r];
                scaled.row_mut(r).scale_mut(w);
            }
            m += sdp.lpa.transpose() * scaled;
        }
        let mdiag = (0..p).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
        let mchol = match Cholesky::new(m.clone()) {
            Some(ch) => ch,
            None => {
                let mut reg = m.clone();
                for i in 0..p {
                    reg[(i, i)] += 1e-13 * mdiag.max(1e-300);
                }
                match Cholesky::new(reg) {
                    Some(ch) => ch,
                    None => {
                        return IpmOutcome { status: IpmStatus::Failure, y, x, xl, stats, message: Some("Schur complement not positive definite".into()) }
                    }
                }
            }
        };

        let xrdz: Vec<CMat> = (0..x.len()).map(|bi| cmatmul(&cmatmul(&x[bi], &rd[bi]), &zinv[bi])).collect();

        // direction for a given centering σμ and corrector terms
        let direction = |sigma_mu: f64, corr: Option<&(Vec<CMat>, DVector<f64>)>| {
            let mut rhs = -rp.clone();
            let mut r_blocks = Vec::with_capacity(x.len());
            for bi in 0..x.len() {
                let mut r = zinv[bi].scale(sigma_mu) - &x[bi] - &xrdz[bi];
                if let Some((cb, _)) = corr {
                    r -= &cb[bi];
                }
                for i in 0..p {
                    rhs[i] += sdp.blocks[bi].f[i].inner(&r);
                }
                r_blocks.push(r);
            }
            let mut rl = DVector::zeros(nrows);
            for rr in 0..nrows {
                let mut v = sigma_mu / zl[rr] - xl[rr] - xl[rr] * rdl[rr] / zl[rr];
                if let Some((_, cl)) = corr {
                    v -= cl[rr];
                }
                rl[rr] = v;
            }
            if nrows > 0 {
                rhs += sdp.lpa.transpose() * &rl;
            }
            let dy = mchol.solve(&rhs);
            let dys = dy.as_slice();
            let mut dz = Vec::with_capacity(x.len());
            let mut dx = Vec::with_capacity(x.len());
            for bi in 0..x.len() {
                let mut d = rd[bi].clone();
                for (f, &v) in sdp.blocks[bi].f.iter().zip(dys) {
                    f.add_to(&mut d, v);
                }
                let mut dxb = zinv[bi].scale(sigma_mu) - &x[bi] - cmatmul(&cmatmul(&x[bi], &d), &zinv[bi]);
                if let Some((cb, _)) = corr {
                    dxb -= &cb[bi];
                }
                dx.push(hermitian_part(&dxb));
                dz.push(d);
            }
            let dzl = &rdl + &sdp.lpa * &dy;
            let mut dxl = DVector::zeros(nrows);
            for rr in 0..nrows {
                let mut v = sigma_mu / zl[rr] - xl[rr] - xl[rr] * dzl[rr] / zl[rr];
                if let Some((_, cl)) = corr {
                    v -= cl[rr];
                }
                dxl[rr] = v;
            }
            (dy, dx, dz, dxl, dzl)
        };

        let steps = |dx: &[CMat], dz: &[CMat], dxl: &DVector<f64>, dzl: &DVector<f64>| {
            let mut ap = max_step_lp(&xl, dxl);
            let mut ad = max_step_lp(&zl, dzl);
            for bi in 0..x.len() {
                ap = ap.min(max_step(&lx[bi], &dx[bi]));
                ad = ad.min(max_step(&lz[bi], &dz[bi]));
            }
            (ap, ad)
        };

        // predictor
        let (_, dx_a, dz_a, dxl_a, dzl_a) = direction(0.0, None);
        let (ap, ad) = steps(&dx_a, &dz_a, &dxl_a, &dzl_a);
        let (ap1, ad1) = (ap.min(1.0), ad.min(1.0));
        let mut gap_aff = 0.0;
        for bi in 0..x.len() {
            gap_aff += trace_product(&(&x[bi] + dx_a[bi].scale(ap1)), &(&z[bi] + dz_a[bi].scale(ad1)));
        }
        gap_aff += (&xl + &dxl_a * ap1).dot(&(&zl + &dzl_a * ad1));
        let mu_aff = gap_aff / ntot as f64;
        let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };

        // corrector
        let corr_b: Vec<CMat> = (0..x.len()).map(|bi| cmatmul(&cmatmul(&dx_a[bi], &dz_a[bi]), &zinv[bi])).collect();
        let corr_l = DVector::from_fn(nrows, |r, _| dxl_a[r] * dzl_a[r] / zl[r]);
        let corr = (corr_b, corr_l);
        let (dy, dx, dz, dxl, dzl) = direction(sigma * mu, Some(&corr));
        let (ap, ad) = steps(&dx, &dz, &dxl, &dzl);
        let gamma = 0.9 + 0.09 * ap.min(ad).min(1.0);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            stalls += 1;
            if stalls > 3 {
                return IpmOutcome { status: IpmStatus::Failure, y, x, xl, stats, message: Some("step length collapsed".into()) };
            }
        } else {
            stalls = 0;
        }
        for bi in 0..x.len() {
            x[bi] += dx[bi].scale(ap);
            z[bi] += dz[bi].scale(ad);
        }
        xl += &dxl * ap;
        zl += &dzl * ad;
        for (yi, d) in y.iter_mut().zip(dy.iter()) {
            *yi += ad * d;
        }
    }
    stats.iterations = opts.max_iter;
    IpmOutcome { status: IpmStatus::Failure, y, x, xl, stats, message: Some("iteration limit reached".into()) }
}

/// Orthonormal vectorization of Hermitian matrices: `⟨A,B⟩ = vec(A)·vec(B)`.
fn hvec(a: &CMat) -> Vec<f64> {
    let n = a.nrows();
    let s = std::f64::consts::SQRT_2;
    let mut v = Vec::with_capacity(n * n);
    for i in 0..n {
        v.push(a[(i, i)].re);
        for j in i + 1..n {
            v.push(s * a[(i, j)].re);
            v.push(s * a[(i, j)].im);
        }
    }
    v
}

fn hunvec(v: &[f64], n: usize) -> CMat {
    let s = std::f64::consts::SQRT_2;
    let mut a = CMat::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        a[(i, i)].re = v[k];
        k += 1;
        for j in i + 1..n {
            let z = num_complex::Complex64::new(v[k] / s, v[k + 1] / s);
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
            k += 2;
        }
    }
    a
}

/// Equality constraints `e0 + A x = 0` in vectorized form.
struct EqualitySystem {
    a: DMatrix<f64>,
    e0: DVector<f64>,
    sizes: Vec<usize>,
}

impl EqualitySystem {
    fn new(p: &LmiProblem) -> Self {
        let n = p.nvars();
        let total: usize = p.equalities.iter().map(|e| e.dim() * e.dim()).sum();
        let mut a = DMatrix::zeros(total, n);
        let mut e0 = DVector::zeros(total);
        let mut off = 0;
        let mut sizes = Vec::new();
        for e in &p.equalities {
            let d = e.dim();
            for (k, v) in hvec(&e.constant).into_iter().enumerate() {
                e0[off + k] = v;
            }
            for (i, c) in e.coeffs.iter().enumerate() {
                for (k, v) in hvec(c).into_iter().enumerate() {
                    a[(off + k, i)] = v;
                }
            }
            off += d * d;
            sizes.push(d);
        }
        Self { a, e0, sizes }
    }

    fn split(&self, w: &DVector<f64>) -> Vec<CMat> {
        let mut out = Vec::new();
        let mut off = 0;
        for &d in &self.sizes {
            out.push(hunvec(&w.as_slice()[off..off + d * d], d));
            off += d * d;
        }
        out
    }
}

enum Phase1 {
    Feasible { s_star: f64 },
    Infeasible(Certificate),
    Failure(String),
}

/// Constraints reduced once and shared by every objective.
pub struct Prepared {
    problem: LmiProblem,
    opts: SolverOptions,
    xp: DVector<f64>,
    null: DMatrix<f64>,
    base: Option<Sdp>,
    dropped: usize,
    phase1: Option<Phase1>,
    phase1_stats: SolveStats,
    scale: f64,
}

impl Prepared {
    pub fn new(problem: &LmiProblem, opts: &SolverOptions) -> Self {
        let mut prep = Self {
            problem: problem.clone(),
            opts: opts.clone(),
            xp: DVector::zeros(problem.nvars()),
            null: DMatrix::identity(problem.nvars(), problem.nvars()),
            base: None,
            dropped: 0,
            phase1: None,
            phase1_stats: SolveStats::default(),
            scale: 1.0,
        };
        if let Err(e) = problem.validate() {
            prep.phase1 = Some(Phase1::Failure(e.to_string()));
            return prep;
        }
        if let Some(cert) = prep.eliminate() {
            prep.phase1 = Some(Phase1::Infeasible(cert));
            return prep;
        }
        prep.build_base();
        prep.run_phase1();
        prep
    }

    /// Parametrize `{x : e0 + A x = 0}` as `x_p + N z`. Returns a certificate
    /// when the system is inconsistent.
    fn eliminate(&mut self) -> Option<Certificate> {
        let n = self.problem.nvars();
        if self.problem.equalities.is_empty() || n == 0 {
            return None;
        }
        let eq = EqualitySystem::new(&self.problem);
        let rows = eq.a.nrows();
        let mut a = eq.a.clone();
        if rows < n {
            a = a.resize_vertically(n, 0.0);
        }
        let svd = SVD::new(a.clone(), true, true);
        let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let cut = self.opts.eq_rank_tol * smax.max(1.0);
        let mut e0 = eq.e0.clone();
        if rows < n {
            e0 = e0.resize_vertically(n, 0.0);
        }
        let mut xp = DVector::zeros(n);
        let mut null_cols = Vec::new();
        for k in 0..svd.singular_values.len() {
            let s = svd.singular_values[k];
            let v = vt.row(k).transpose();
            if s > cut {
                let coef = -u.column(k).dot(&e0) / s;
                xp += v * coef;
            } else {
                null_cols.push(v);
            }
        }
        let resid = &eq.e0 + &eq.a * &xp;
        let rnorm = resid.norm();
        if rnorm > self.opts.feas_tol * (1.0 + eq.e0.norm()) {
            // Farkas: w = -resid is orthogonal to range(A) up to the cutoff
            let mut w = -resid;
            // project out what remains of range(A)
            let corr = svd_lsq(&eq.a, &w, cut);
            w -= &eq.a * corr;
            let scale = w.norm();
            let w = w / scale;
            let cert = Certificate {
                psd: self.problem.psd_blocks.iter().map(|b| CMat::zeros(b.dim(), b.dim())).collect(),
                equalities: eq.split(&w),
                lower: vec![0.0; n],
                upper: vec![0.0; n],
            };
            return Some(cert);
        }
        self.xp = xp;
        self.null = if null_cols.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&null_cols) };
        None
    }

    fn build_base(&mut self) {
        let p = &self.problem;
        let n = p.nvars();
        let q = self.null.ncols();
        let xp: Vec<f64> = self.xp.iter().copied().collect();

        // radius of the bound box around x_p, when every variable is bounded
        let mut radius_sq = 0.0;
        let mut all_bounded = true;
        for i in 0..n {
            match (p.lower[i], p.upper[i]) {
                (Some(l), Some(u)) => radius_sq += ((l - xp[i]).abs().max((u - xp[i]).abs())).powi(2),
                _ => all_bounded = false,
            }
        }
        let mut blocks = Vec::new();
        let mut scale = 1.0_f64;
        for (k, b) in p.psd_blocks.iter().enumerate() {
            let f0 = b.eval(&xp);
            let f: Vec<Coef> = (0..q)
                .map(|j| {
                    let mut g = CMat::zeros(b.dim(), b.dim());
                    for i in 0..n {
                        let w = self.null[(i, j)];
                        if w != 0.0 {
                            g += b.coeffs[i].scale(w);
                        }
                    }
                    Coef::classify(g)
                })
                .collect();
            if all_bounded {
                let spread = radius_sq.sqrt() * f.iter().map(|c| c.spectral().powi(2)).sum::<f64>().sqrt();
                let floor = min_eigenvalue(&f0);
                if floor - spread > 1e-9 * (1.0 + floor.abs()) {
                    self.dropped += 1;
                    continue;
                }
            }
            scale = scale.max(hermitian_norm(&f0));
            blocks.push(Block { f0, f, origin: Some(k) });
        }
        let mut rows = Vec::new();
        let mut lp0 = Vec::new();
        let mut lpa: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            let coeffs: Vec<f64> = (0..q).map(|j| self.null[(i, j)]).collect();
            if let Some(l) = p.lower[i] {
                rows.push(RowOrigin::Lower(i));
                lp0.push(xp[i] - l);
                lpa.push(coeffs.clone());
            }
            if let Some(u) = p.upper[i] {
                rows.push(RowOrigin::Upper(i));
                lp0.push(u - xp[i]);
                lpa.push(coeffs.iter().map(|v| -v).collect());
            }
        }
        let nr = rows.len();
        let lpa = DMatrix::from_fn(nr, q, |r, j| lpa[r][j]);
        let objective: Vec<f64> = (0..q).map(|j| (0..n).map(|i| self.null[(i, j)] * p.objective[i]).sum()).collect();
        self.scale = scale;
        self.base = Some(Sdp { c: objective, blocks, lp0: DVector::from_vec(lp0), lpa, rows });
    }

    fn run_phase1(&mut self) {
        let base = self.base.as_ref().unwrap();
        let q = base.p();
        // min s over (z, s): blocks + sI ⪰ 0, rows + s ≥ 0, s + 1 ≥ 0
        let mut blocks = base.blocks.clone();
        for b in &mut blocks {
            b.f.push(Coef::Identity(1.0));
        }
        let nr = base.lp0.len();
        let mut lpa = DMatrix::zeros(nr + 1, q + 1);
        lpa.view_mut((0, 0), (nr, q)).copy_from(&base.lpa);
        for r in 0..=nr {
            lpa[(r, q)] = 1.0;
        }
        let mut lp0 = base.lp0.clone().resize_vertically(nr + 1, 0.0);
        lp0[nr] = self.scale;
        let mut rows = base.rows.clone();
        rows.push(RowOrigin::Internal);
        let mut c = vec![0.0; q + 1];
        c[q] = 1.0;
        let sdp = Sdp { c, blocks, lp0, lpa, rows };
        let out = ipm(&sdp, &self.opts);
        self.phase1_stats = out.stats.clone();
        if out.status != IpmStatus::Optimal {
            self.phase1 = Some(Phase1::Failure(format!(
                "phase I did not converge: {}",
                out.message.unwrap_or_else(|| format!("{:?}", out.status))
            )));
            return;
        }
        let s_star = out.y[q];
        if s_star <= self.opts.feas_tol * self.scale {
            self.phase1 = Some(Phase1::Feasible { s_star });
            return;
        }
        self.phase1 = Some(Phase1::Infeasible(self.certificate_from(&sdp, &out)));
    }

    /// Map phase-I multipliers back to the original constraints.
    fn certificate_from(&self, sdp: &Sdp, out: &IpmOutcome) -> Certificate {
        let p = &self.problem;
        let n = p.nvars();
        let mut psd: Vec<CMat> = p.psd_blocks.iter().map(|b| CMat::zeros(b.dim(), b.dim())).collect();
        for (b, xb) in sdp.blocks.iter().zip(&out.x) {
            if let Some(k) = b.origin {
                psd[k] = hermitian_part(xb);
            }
        }
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for (r, origin) in sdp.rows.iter().enumerate() {
            match origin {
                RowOrigin::Lower(i) => lower[*i] = out.xl[r].max(0.0),
                RowOrigin::Upper(i) => upper[*i] = out.xl[r].max(0.0),
                RowOrigin::Internal => {}
            }
        }
        // Project the PSD multipliers onto the cone, then normalize the mass.
        for y in &mut psd {
            let e = Eigh::new(y);
            *y = e.apply(|v| v.max(0.0));
        }
        let mass: f64 = psd.iter().map(|y| y.trace().re).sum::<f64>() + lower.iter().sum::<f64>() + upper.iter().sum::<f64>();
        let mass = if mass > 0.0 { mass } else { 1.0 };
        for y in &mut psd {
            *y = y.scale(1.0 / mass);
        }
        lower.iter_mut().chain(upper.iter_mut()).for_each(|v| *v /= mass);
        let mut cert = Certificate { psd, equalities: Vec::new(), lower, upper };
        if !p.equalities.is_empty() {
            // cancel the slope with equality multipliers: A^T w = -g
            let eq = EqualitySystem::new(p);
            let (g, _) = cert.lagrangian(p);
            let g = DVector::from_vec(g);
            let w = svd_lsq(&eq.a.transpose(), &(-g), 0.0);
            cert.equalities = eq.split(&w);
        }
        cert
    }

    pub fn dropped_blocks(&self) -> usize {
        self.dropped
    }

    /// Solve for one objective over the prepared constraints.
    pub fn solve(&self, objective: &[f64], sense: Sense) -> LmiSolution {
        let n = self.problem.nvars();
        if objective.len() != n {
            return LmiSolution::failed(SolveStatus::NumericalFailure, format!("objective has {} entries, expected {n}", objective.len()));
        }
        let s_star = match self.phase1.as_ref() {
            Some(Phase1::Feasible { s_star }) => *s_star,
            Some(Phase1::Infeasible(cert)) => {
                let mut sol = LmiSolution::failed(SolveStatus::Infeasible, "constraints are infeasible");
                sol.certificate = Some(cert.clone());
                sol.phase1 = self.phase1_stats.clone();
                sol.dropped_blocks = self.dropped;
                sol.message = None;
                return sol;
            }
            Some(Phase1::Failure(msg)) => {
                let mut sol = LmiSolution::failed(SolveStatus::NumericalFailure, msg.clone());
                sol.phase1 = self.phase1_stats.clone();
                return sol;
            }
            None => return LmiSolution::failed(SolveStatus::NumericalFailure, "not prepared"),
        };
        let base = self.base.as_ref().unwrap();
        let sign = if sense == Sense::Maximize { -1.0 } else { 1.0 };
        let q = base.p();
        let c: Vec<f64> = (0..q).map(|j| sign * (0..n).map(|i| self.null[(i, j)] * objective[i]).sum::<f64>()).collect();

        // Shift every block by a small margin when phase I found no clear interior.
        let margin = 10.0 * self.opts.tol * self.scale;
        let relax = if s_star < -margin { 0.0 } else { s_star.max(0.0) + margin };
        let mut sdp = base.clone();
        sdp.c = c;
        if relax > 0.0 {
            for b in &mut sdp.blocks {
                for i in 0..b.n() {
                    b.f0[(i, i)].re += relax;
                }
            }
            sdp.lp0.add_scalar_mut(relax);
        }
        let out = ipm(&sdp, &self.opts);
        let mut sol = LmiSolution::failed(SolveStatus::NumericalFailure, "");
        sol.phase1 = self.phase1_stats.clone();
        sol.relaxation = relax;
        sol.dropped_blocks = self.dropped;
        sol.stats = out.stats.clone();
        match out.status {
            IpmStatus::Optimal => {
                let z = DVector::from_column_slice(&out.y);
                let x = &self.xp + &self.null * z;
                let xv: Vec<f64> = x.iter().copied().collect();
                let obj: f64 = objective.iter().zip(&xv).map(|(a, b)| a * b).sum();
                let rows = sdp.lp_eval(&out.y);
                let active = sdp.rows.iter().zip(rows.iter()).any(|(o, v)| {
                    !matches!(o, RowOrigin::Internal) && *v - relax <= 1e-6 * (1.0 + self.scale)
                });
                let min_eig = self
                    .problem
                    .psd_blocks
                    .iter()
                    .map(|b| min_eigenvalue(&b.eval(&xv)))
                    .fold(f64::INFINITY, f64::min);
                sol.status = SolveStatus::Optimal;
                sol.objective = Some(obj);
                sol.x = Some(xv);
                sol.min_block_eigenvalue = if min_eig.is_finite() { Some(min_eig) } else { None };
                sol.bound_active = active;
                sol.message = None;
            }
            IpmStatus::Unbounded => {
                sol.status = SolveStatus::Unbounded;
                sol.message = None;
            }
            IpmStatus::Failure => {
                sol.message = out.message;
            }
        }
        sol
    }
}

/// Least-squares solution of `a x = b` dropping singular values below `cut`.
fn svd_lsq(a: &DMatrix<f64>, b: &DVector<f64>, cut: f64) -> DVector<f64> {
    let (rows, cols) = a.shape();
    let (aa, bb) = if rows < cols {
        (a.clone().resize_vertically(cols, 0.0), b.clone().resize_vertically(cols, 0.0))
    } else {
        (a.clone(), b.clone())
    };
    let svd = SVD::new(aa, true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = cut.max(1e-13 * smax);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut x = DVector::zeros(cols);
    for k in 0..svd.singular_values.len() {
        let s = svd.singular_values[k];
        if s > cut {
            x += vt.row(k).transpose() * (u.column(k).dot(&bb) / s);
        }
    }
    x
}

/// Solve a single LMI problem.
pub fn solve_lmi(problem: &LmiProblem, opts: &SolverOptions) -> LmiSolution {
    Prepared::new(problem, opts).solve(&problem.objective, problem.sense)
}
