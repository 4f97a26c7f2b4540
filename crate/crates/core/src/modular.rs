//! Dense modular theory on the GNS space of a faithful qubit state.
//!
//! Vectors are represented in GNS-orthonormal coordinates `u = G^{1/2} c`,
//! where `c` holds the Hermitian-Pauli coefficients of an operator and `G` is
//! the Gram matrix `G_jk = ω(P_j P_k)`. In these coordinates the GNS adjoint is
//! the conjugate transpose. Antilinear maps are stored as `x ↦ M·conj(x)`.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cmatmul, conj, hermitian_part, spectral_norm, CMat, Eigh, ZERO};
use crate::model::{build_dual_graph, enumerate_pkl, HamiltonianModel};
use crate::oracle::{build_gibbs, GibbsState};
use crate::pauli::{all_paulis, pauli_coefficients, PauliString};

/// Largest qubit count handled here (GNS dimension `4^5 = 1024`).
pub const MAX_MODULAR_QUBITS: usize = 5;

/// Smallest eigenvalue of `ρ` accepted as faithful.
pub const FAITHFUL_FLOOR: f64 = 1e-12;

/// The operator algebra with the GNS inner product `⟨a|b⟩ = ω(a*b)`.
#[derive(Clone, Debug)]
pub struct GnsSpace {
    n: usize,
    basis: Vec<PauliString>,
    index: HashMap<(u64, u64), usize>,
    rho: CMat,
    rho_inv: CMat,
    gram: CMat,
    gram_sqrt: CMat,
    gram_inv_sqrt: CMat,
}

impl GnsSpace {
    pub fn new(state: &GibbsState) -> Result<Self> {
        let n = state.n();
        if n > MAX_MODULAR_QUBITS {
            return Err(Error::CapExceeded { n, cap: MAX_MODULAR_QUBITS });
        }
        let floor = state.min_eigenvalue();
        if !(floor > FAITHFUL_FLOOR) {
            return Err(Error::NotFaithful(floor));
        }
        let basis = all_paulis(n);
        let index = basis.iter().enumerate().map(|(i, p)| ((p.x_mask(), p.z_mask()), i)).collect();
        let rho = state.rho().clone();
        let rho_inv = state.rho_power(-1.0);
        // ω(P_j P_k) through the product Pauli
        let expect: Vec<Complex64> = basis.iter().map(|p| p.trace_with(&rho)).collect();
        let mut space = Self {
            n,
            basis,
            index,
            rho,
            rho_inv,
            gram: CMat::zeros(0, 0),
            gram_sqrt: CMat::zeros(0, 0),
            gram_inv_sqrt: CMat::zeros(0, 0),
        };
        let dim = space.dim();
        let mut gram = CMat::zeros(dim, dim);
        for j in 0..dim {
            for k in 0..dim {
                let prod = space.basis[j].multiply(&space.basis[k])?;
                let l = space.index[&(prod.x_mask(), prod.z_mask())];
                gram[(j, k)] = (prod.coefficient() / space.basis[l].coefficient()) * expect[l];
            }
        }
        let eig = Eigh::new(&gram);
        if eig.min() <= 0.0 {
            return Err(Error::NotPositiveDefinite(eig.min()));
        }
        space.gram_sqrt = eig.apply(f64::sqrt);
        space.gram_inv_sqrt = eig.apply(|x| 1.0 / x.sqrt());
        space.gram = hermitian_part(&gram);
        Ok(space)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `d²`.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[PauliString] {
        &self.basis
    }

    pub fn gram(&self) -> &CMat {
        &self.gram
    }

    pub fn rho(&self) -> &CMat {
        &self.rho
    }

    /// Position of a Hermitian Pauli in the basis.
    pub fn position(&self, p: &PauliString) -> Result<usize> {
        if p.n() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: p.n() });
        }
        if p.letter_phase() != 0 {
            return Err(Error::Invalid(format!("{p} is not a canonical Hermitian Pauli")));
        }
        Ok(self.index[&(p.x_mask(), p.z_mask())])
    }

    /// Orthonormal coordinates of a dense operator.
    pub fn coords(&self, a: &CMat) -> DVector<Complex64> {
        let c = DVector::from_vec(pauli_coefficients(a, &self.basis));
        &self.gram_sqrt * c
    }

    /// Dense operator from orthonormal coordinates.
    pub fn operator(&self, u: &DVector<Complex64>) -> CMat {
        let c = &self.gram_inv_sqrt * u;
        let d = 1usize << self.n;
        let mut out = CMat::zeros(d, d);
        for (p, v) in self.basis.iter().zip(c.iter()) {
            if v.norm() == 0.0 {
                continue;
            }
            let act = p.dense_action();
            for b in 0..d {
                let (row, w) = act(b);
                out[(row, b)] += v * w;
            }
        }
        out
    }

    /// `ω(a* b)` from dense traces.
    pub fn inner(&self, a: &CMat, b: &CMat) -> Complex64 {
        cmatmul(&self.rho, &cmatmul(&a.adjoint(), b)).trace()
    }

    /// Matrix of a linear superoperator in orthonormal coordinates.
    pub fn superoperator(&self, f: impl Fn(&CMat) -> CMat) -> Result<CMat> {
        let dim = self.dim();
        let mut pauli = CMat::zeros(dim, dim);
        for (k, p) in self.basis.iter().enumerate() {
            let image = f(&p.to_dense_capped(MAX_MODULAR_QUBITS)?);
            for (j, v) in pauli_coefficients(&image, &self.basis).into_iter().enumerate() {
                pauli[(j, k)] = v;
            }
        }
        Ok(cmatmul(&cmatmul(&self.gram_sqrt, &pauli), &self.gram_inv_sqrt))
    }

    /// `a ↦ a*`, which is entrywise conjugation of Pauli coefficients.
    pub fn star(&self) -> AntiLinear {
        AntiLinear { matrix: cmatmul(&self.gram_sqrt, &conj(&self.gram_inv_sqrt)) }
    }
}

/// `x ↦ M·conj(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AntiLinear {
    pub matrix: CMat,
}

impl AntiLinear {
    pub fn apply(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        &self.matrix * x.map(|z| z.conj())
    }

    /// `T ∘ U` for another antilinear `U`, which is linear.
    pub fn compose(&self, other: &AntiLinear) -> CMat {
        cmatmul(&self.matrix, &conj(&other.matrix))
    }

    /// `T ∘ L` for linear `L`.
    pub fn after(&self, l: &CMat) -> AntiLinear {
        AntiLinear { matrix: cmatmul(&self.matrix, &conj(l)) }
    }

    /// `L ∘ T` for linear `L`.
    pub fn before(&self, l: &CMat) -> AntiLinear {
        AntiLinear { matrix: cmatmul(l, &self.matrix) }
    }

    /// `T L T` for linear `L`.
    pub fn sandwich(&self, l: &CMat) -> CMat {
        cmatmul(&cmatmul(&self.matrix, &conj(l)), &conj(&self.matrix))
    }

    /// Antilinear adjoint, `⟨x|Ty⟩ = ⟨y|T†x⟩`.
    pub fn adjoint(&self) -> AntiLinear {
        AntiLinear { matrix: self.matrix.transpose() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<Check>,
}

impl CheckReport {
    /// Records `‖lhs − rhs‖ / max(1, ‖rhs‖)` in spectral norm.
    pub fn compare(&mut self, name: &str, lhs: &CMat, rhs: &CMat, tol: f64) {
        let residual = spectral_norm(&(lhs - rhs)) / spectral_norm(rhs).max(1.0);
        self.push(name, residual, tol);
    }

    pub fn push(&mut self, name: &str, residual: f64, tol: f64) {
        self.checks.push(Check { name: name.to_string(), residual, tol, pass: residual <= tol });
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.residual).fold(0.0, f64::max)
    }
}

/// `Δ`, `S` and `J = SΔ^{-1/2}`.
#[derive(Clone, Debug)]
pub struct ModularTriple {
    pub delta: CMat,
    pub s: AntiLinear,
    pub j: AntiLinear,
    delta_eig: Eigh,
}

impl ModularTriple {
    /// Builds `J` from `Δ` and a candidate `S`.
    pub fn from_parts(delta: CMat, s: AntiLinear) -> Result<Self> {
        let delta = hermitian_part(&delta);
        let delta_eig = Eigh::new(&delta);
        if delta_eig.min() <= 0.0 {
            return Err(Error::NotPositiveDefinite(delta_eig.min()));
        }
        let j = s.after(&delta_eig.apply(|x| x.powf(-0.5)));
        Ok(Self { delta, s, j, delta_eig })
    }

    pub fn delta_power(&self, p: f64) -> CMat {
        self.delta_eig.apply(|x| x.powf(p))
    }

    pub fn log_delta(&self) -> CMat {
        self.delta_eig.apply(f64::ln)
    }

    pub fn delta_eigenvalues(&self) -> Vec<f64> {
        self.delta_eig.values.iter().copied().collect()
    }

    /// Polar-decomposition identities of an antilinear involution.
    pub fn verify(&self, tol: f64) -> CheckReport {
        let mut rep = CheckReport::default();
        for p in [1.0, 0.5, -0.5, 2.0] {
            rep.compare(&format!("S Delta^{p} S = Delta^{}", -p), &self.s.sandwich(&self.delta_power(p)), &self.delta_power(-p), tol);
        }
        let half = self.delta_power(0.5);
        let dim = self.delta.nrows();
        let id = CMat::identity(dim, dim);
        rep.compare("J = Delta^1/2 S", &self.j.matrix, &self.s.before(&half).matrix, tol);
        rep.compare("S = J Delta^1/2", &self.s.matrix, &self.j.after(&half).matrix, tol);
        rep.compare("S = Delta^-1/2 J", &self.s.matrix, &self.j.before(&self.delta_power(-0.5)).matrix, tol);
        rep.compare("J^2 = 1", &self.j.compose(&self.j), &id, tol);
        rep.compare("J adjoint = J", &self.j.adjoint().matrix, &self.j.matrix, tol);
        let log = self.log_delta();
        rep.compare("J log Delta J = -log Delta", &self.j.sandwich(&log), &(-&log), tol);
        rep
    }
}

/// `Δ: a ↦ ρaρ^{-1}`, `S: a ↦ a*` and `J`.
pub fn build_modular(space: &GnsSpace) -> Result<ModularTriple> {
    let rho = space.rho.clone();
    let rho_inv = space.rho_inv.clone();
    let delta = space.superoperator(|a| cmatmul(&cmatmul(&rho, a), &rho_inv))?;
    ModularTriple::from_parts(delta, space.star())
}

/// `H: |a⟩ ↦ |[h, a]⟩`.
pub fn gns_hamiltonian(space: &GnsSpace, h: &CMat) -> Result<CMat> {
    let d = 1usize << space.n;
    if h.nrows() != d || h.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: h.nrows() });
    }
    let dev = crate::linalg::max_abs_entry(&(h - h.adjoint()));
    if dev > 1e-10 * (1.0 + crate::linalg::max_abs_entry(h)) {
        return Err(Error::NotHermitian(dev));
    }
    space.superoperator(|a| cmatmul(h, a) - cmatmul(a, h))
}

/// Polar-decomposition identities of the modular triple of `ρ`.
pub fn verify_modular_identities(state: &GibbsState, tol: f64) -> Result<CheckReport> {
    let space = GnsSpace::new(state)?;
    Ok(build_modular(&space)?.verify(tol))
}

/// Residuals of the three equivalent symmetry conditions for `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    /// `‖[h, ρ]‖`.
    pub commutator: f64,
    /// `‖H − H†‖`.
    pub hermiticity: f64,
    /// `‖JHJ + H‖`.
    pub conjugation: f64,
    /// `‖H‖` on the GNS space.
    pub gns_norm: f64,
    /// `‖h‖`.
    pub h_norm: f64,
}

impl SymmetryReport {
    /// All three conditions hold to `tol`.
    pub fn all_hold(&self, tol: f64) -> bool {
        self.commutator <= tol && self.hermiticity <= tol && self.conjugation <= tol
    }

    /// All three conditions fail at `tol`.
    pub fn all_fail(&self, tol: f64) -> bool {
        self.commutator > tol && self.hermiticity > tol && self.conjugation > tol
    }
}

pub fn symmetry_report(space: &GnsSpace, triple: &ModularTriple, h: &CMat) -> Result<SymmetryReport> {
    let big = gns_hamiltonian(space, h)?;
    let comm = cmatmul(h, &space.rho) - cmatmul(&space.rho, h);
    Ok(SymmetryReport {
        commutator: spectral_norm(&comm),
        hermiticity: spectral_norm(&(&big - big.adjoint())),
        conjugation: spectral_norm(&(triple.j.sandwich(&big) + &big)),
        gns_norm: spectral_norm(&big),
        h_norm: spectral_norm(h),
    })
}

/// `‖log Δ + H‖`, zero exactly when `ρ ∝ e^{-h}`.
pub fn gibbs_residual(space: &GnsSpace, triple: &ModularTriple, h: &CMat) -> Result<f64> {
    let big = gns_hamiltonian(space, h)?;
    Ok(spectral_norm(&(triple.log_delta() + big)))
}

/// `𝐃`, `𝐒`, `𝐉` on the span of the perturbers, in the basis
/// `|a_i⟩ = Σ_j (C^{-1/2})_{ji} |P_j⟩`.
#[derive(Clone, Debug)]
pub struct RestrictedOps {
    pub perturbers: Vec<PauliString>,
    /// Isometry from restricted to full orthonormal coordinates.
    pub embedding: CMat,
    pub dbold: CMat,
    pub sbold: AntiLinear,
    pub jbold: AntiLinear,
    d_eig: Eigh,
}

pub fn restricted_ops(space: &GnsSpace, triple: &ModularTriple, perturbers: &[PauliString]) -> Result<RestrictedOps> {
    let idx = perturbers.iter().map(|p| space.position(p)).collect::<Result<Vec<_>>>()?;
    let r = idx.len();
    let unique: BTreeSet<usize> = idx.iter().copied().collect();
    if unique.len() != r || r == 0 {
        return Err(Error::Invalid("perturbers must be nonempty and distinct".into()));
    }
    let c = CMat::from_fn(r, r, |i, j| space.gram[(idx[i], idx[j])]);
    let c_eig = Eigh::new(&c);
    if c_eig.min() <= 0.0 {
        return Err(Error::NotPositiveDefinite(c_eig.min()));
    }
    let w = c_eig.apply(|x| 1.0 / x.sqrt());
    let cols = CMat::from_fn(space.dim(), r, |a, i| space.gram_sqrt[(a, idx[i])]);
    let u = cmatmul(&cols, &w);
    let ua = u.adjoint();
    let dbold = hermitian_part(&cmatmul(&cmatmul(&ua, &triple.delta), &u));
    let sbold = AntiLinear { matrix: cmatmul(&cmatmul(&ua, &triple.s.matrix), &conj(&u)) };
    let d_eig = Eigh::new(&dbold);
    if d_eig.min() <= 0.0 {
        return Err(Error::NotPositiveDefinite(d_eig.min()));
    }
    let jbold = sbold.after(&d_eig.apply(|x| x.powf(-0.5)));
    Ok(RestrictedOps { perturbers: perturbers.to_vec(), embedding: u, dbold, sbold, jbold, d_eig })
}

impl RestrictedOps {
    pub fn r(&self) -> usize {
        self.perturbers.len()
    }

    pub fn d_power(&self, p: f64) -> CMat {
        self.d_eig.apply(|x| x.powf(p))
    }

    pub fn log_d(&self) -> CMat {
        self.d_eig.apply(f64::ln)
    }

    /// `⟨a_i|L|a_j⟩` for a linear map in full orthonormal coordinates.
    pub fn compress(&self, l: &CMat) -> CMat {
        cmatmul(&cmatmul(&self.embedding.adjoint(), l), &self.embedding)
    }

    /// `QJQ` in restricted coordinates.
    pub fn compress_antilinear(&self, t: &AntiLinear) -> AntiLinear {
        AntiLinear { matrix: cmatmul(&cmatmul(&self.embedding.adjoint(), &t.matrix), &conj(&self.embedding)) }
    }

    pub fn verify(&self, tol: f64) -> CheckReport {
        let mut rep = CheckReport::default();
        let r = self.r();
        let id = CMat::identity(r, r);
        let j = &self.jbold;
        rep.compare("Jbold^2 = 1", &j.compose(j), &id, tol);
        rep.compare("Jbold adjoint = Jbold", &j.adjoint().matrix, &j.matrix, tol);
        rep.compare("Jbold Dbold Jbold = Dbold^-1", &j.sandwich(&self.dbold), &self.d_power(-1.0), tol);
        rep.compare("Jbold Dbold^1/2 Jbold = Dbold^-1/2", &j.sandwich(&self.d_power(0.5)), &self.d_power(-0.5), tol);
        let log = self.log_d();
        rep.compare("Jbold log Dbold Jbold = -log Dbold", &j.sandwich(&log), &(-&log), tol);
        rep
    }
}

/// One local operator checked against the commuting-locality prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalityEntry {
    pub a: PauliString,
    pub power: f64,
    pub predicted: Vec<usize>,
    pub observed: Vec<usize>,
    pub support_ok: bool,
    /// Weight of `ρ^p a ρ^{-p}` outside the span of the perturbers.
    pub outside_span: f64,
    /// `‖Δ^p|a⟩ − 𝐃^p|a⟩‖`.
    pub delta_residual: f64,
    /// `‖J|a⟩ − 𝐉|a⟩‖`.
    pub j_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub ell_prime: usize,
    pub level: usize,
    pub degree: usize,
    pub r: usize,
    pub tol: f64,
    pub entries: Vec<LocalityEntry>,
}

impl LocalityReport {
    pub fn support_pass(&self) -> bool {
        self.entries.iter().all(|e| e.support_ok)
    }

    pub fn restricted_pass(&self) -> bool {
        self.entries.iter().all(|e| e.outside_span <= self.tol && e.delta_residual <= self.tol && e.j_residual <= self.tol)
    }

    pub fn pass(&self) -> bool {
        self.support_pass() && self.restricted_pass()
    }
}

/// Qubits of `a` together with every term overlapping it.
pub fn predicted_support(model: &HamiltonianModel, a: &PauliString) -> Vec<usize> {
    let mask = a.support_mask();
    let mut out = mask;
    for e in model.terms() {
        if e.support_mask() & mask != 0 {
            out |= e.support_mask();
        }
    }
    (0..model.n()).filter(|q| out >> q & 1 == 1).collect()
}

/// Checks how `Δ^p` acts on low-level perturbers of a commuting model.
///
/// Uses the model's own coefficients. `level` defaults to `(1 + 𝔡)ℓ′`. With
/// `require_decomposition` false the check also runs on non-commuting models,
/// which is how negative controls are produced.
pub fn verify_commuting_locality(
    model: &HamiltonianModel,
    ell_prime: usize,
    powers: &[f64],
    level: Option<usize>,
    require_decomposition: bool,
    tol: f64,
) -> Result<LocalityReport> {
    if require_decomposition && model.commuting_decomposition().is_none() {
        return Err(Error::MissingDecomposition);
    }
    let lambda = model
        .true_coeffs()
        .ok_or_else(|| Error::InvalidModel("model has no coefficients".into()))?
        .to_vec();
    let degree = build_dual_graph(model).degree();
    let level = level.unwrap_or((1 + degree) * ell_prime);
    let state = build_gibbs(model, &lambda)?;
    let space = GnsSpace::new(&state)?;
    let triple = build_modular(&space)?;
    let perturbers = enumerate_pkl(model, level);
    let ops = restricted_ops(&space, &triple, &perturbers)?;
    let in_span: BTreeSet<usize> = perturbers.iter().map(|p| space.position(p)).collect::<Result<_>>()?;
    let locals: Vec<PauliString> = enumerate_pkl(model, ell_prime).into_iter().filter(|p| !p.is_identity()).collect();
    let ua = ops.embedding.adjoint();
    let mut entries = Vec::new();
    for a in &locals {
        let dense = a.to_dense_capped(MAX_MODULAR_QUBITS)?;
        let ua_full = space.coords(&dense);
        let x = &ua * &ua_full;
        let predicted = predicted_support(model, a);
        let pred_mask: u64 = predicted.iter().map(|q| 1u64 << q).sum();
        let j_full = triple.j.apply(&ua_full);
        let j_restricted = &ops.embedding * ops.jbold.apply(&x);
        let j_residual = (j_full - j_restricted).norm();
        for &p in powers {
            let image = cmatmul(&cmatmul(&state.rho_power(p), &dense), &state.rho_power(-p));
            let coeffs = pauli_coefficients(&image, &space.basis);
            let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
            let mut observed = 0u64;
            let mut outside = 0.0_f64;
            for (k, c) in coeffs.iter().enumerate() {
                if c.norm() > tol * scale {
                    observed |= space.basis[k].support_mask();
                    if !in_span.contains(&k) {
                        outside = outside.max(c.norm() / scale);
                    }
                }
            }
            let full = &triple.delta_power(p) * &ua_full;
            let restricted = &ops.embedding * (ops.d_power(p) * &x);
            let delta_residual = (full - restricted).norm() / ua_full.norm().max(1.0);
            entries.push(LocalityEntry {
                a: *a,
                power: p,
                predicted: predicted.clone(),
                observed: (0..model.n()).filter(|q| observed >> q & 1 == 1).collect(),
                support_ok: observed & !pred_mask == 0,
                outside_span: outside,
                delta_residual,
                j_residual,
            });
        }
    }
    Ok(LocalityReport { ell_prime, level, degree, r: ops.r(), tol, entries })
}

/// Dense `ρaρ^{-1}` for a dense `a`, used by cross-checks.
pub fn conjugate_by_rho(space: &GnsSpace, a: &CMat) -> CMat {
    cmatmul(&cmatmul(&space.rho, a), &space.rho_inv)
}

/// `⟨a|Δ|b⟩` through orthonormal coordinates.
pub fn delta_form(space: &GnsSpace, triple: &ModularTriple, a: &CMat, b: &CMat) -> Complex64 {
    let ua = space.coords(a);
    let ub = space.coords(b);
    let mut acc = ZERO;
    let db = &triple.delta * ub;
    for (x, y) in ua.iter().zip(db.iter()) {
        acc += x.conj() * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_entry, I, ONE};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gibbs_of(h: &CMat) -> GibbsState {
        GibbsState::from_hamiltonian(h).unwrap()
    }

    fn random_hermitian(d: usize, rng: &mut ChaCha8Rng, scale: f64) -> CMat {
        let a = CMat::from_fn(d, d, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        hermitian_part(&a).scale(scale)
    }

    #[test]
    fn tracial_state_is_trivial() {
        let state = gibbs_of(&CMat::zeros(4, 4));
        let space = GnsSpace::new(&state).unwrap();
        let t = build_modular(&space).unwrap();
        let id = CMat::identity(16, 16);
        assert!(max_abs_entry(&(&t.delta - &id)) < 1e-12);
        assert!(max_abs_entry(&(&t.j.matrix - &t.s.matrix)) < 1e-12);
        assert!(t.verify(1e-12).pass());
    }

    #[test]
    fn single_qubit_delta_spectrum() {
        // ρ = diag(0.2, 0.8)
        let mut h = CMat::zeros(2, 2);
        h[(0, 0)] = ONE * -(0.2_f64.ln());
        h[(1, 1)] = ONE * -(0.8_f64.ln());
        let space = GnsSpace::new(&gibbs_of(&h)).unwrap();
        let t = build_modular(&space).unwrap();
        let ev = t.delta_eigenvalues();
        for (got, want) in ev.iter().zip([0.25, 1.0, 1.0, 4.0]) {
            assert!((got - want).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn delta_form_matches_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(4, &mut rng, 1.0);
        let state = gibbs_of(&h);
        let space = GnsSpace::new(&state).unwrap();
        let t = build_modular(&space).unwrap();
        let a = CMat::from_fn(4, 4, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let b = CMat::from_fn(4, 4, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        // ⟨a|Δ|b⟩ = ω(b a*)
        let lhs = delta_form(&space, &t, &a, &b);
        let rhs = state.expect_dense(&cmatmul(&b, &a.adjoint())).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
        // and the GNS inner product matches the coordinates
        let ip = space.coords(&a).dotc(&space.coords(&b));
        assert!((ip - space.inner(&a, &b)).norm() < 1e-12);
        assert!(max_abs_entry(&(space.operator(&space.coords(&a)) - &a)) < 1e-12);
    }

    #[test]
    fn identity_hamiltonian_is_zero() {
        let state = gibbs_of(&CMat::zeros(2, 2));
        let space = GnsSpace::new(&state).unwrap();
        let big = gns_hamiltonian(&space, &CMat::identity(2, 2)).unwrap();
        assert!(max_abs_entry(&big) < 1e-15);
        let mut bad = CMat::zeros(2, 2);
        bad[(0, 1)] = I;
        assert!(matches!(gns_hamiltonian(&space, &bad), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn gibbs_pair_and_symmetry_equivalences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_hermitian(4, &mut rng, 0.8);
        let space = GnsSpace::new(&gibbs_of(&h)).unwrap();
        let t = build_modular(&space).unwrap();
        assert!(gibbs_residual(&space, &t, &h).unwrap() < 1e-9);
        let other = random_hermitian(4, &mut rng, 0.8);
        assert!(gibbs_residual(&space, &t, &other).unwrap() > 1e-2);

        // h² commutes with ρ, a random operator does not
        let sym = symmetry_report(&space, &t, &cmatmul(&h, &h)).unwrap();
        assert!(sym.all_hold(1e-9), "{sym:?}");
        assert!(sym.gns_norm <= 2.0 * sym.h_norm + 1e-9);
        let asym = symmetry_report(&space, &t, &other).unwrap();
        assert!(asym.all_fail(1e-6), "{asym:?}");
    }

    #[test]
    fn corrupted_s_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_hermitian(4, &mut rng, 1.0);
        let space = GnsSpace::new(&gibbs_of(&h)).unwrap();
        let t = build_modular(&space).unwrap();
        assert!(t.verify(1e-9).pass());
        let mut s = t.s.clone();
        s.matrix[(1, 2)] += Complex64::new(1e-3, 0.0);
        let bad = ModularTriple::from_parts(t.delta.clone(), s).unwrap();
        let rep = bad.verify(1e-9);
        assert!(!rep.pass());
        assert!(!rep.get("J^2 = 1").unwrap().pass);
    }

    #[test]
    fn full_span_restriction_is_a_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_hermitian(4, &mut rng, 1.0);
        let space = GnsSpace::new(&gibbs_of(&h)).unwrap();
        let t = build_modular(&space).unwrap();
        let ops = restricted_ops(&space, &t, space.basis()).unwrap();
        assert!(ops.verify(1e-10).pass());
        let qjq = ops.compress_antilinear(&t.j);
        assert!(max_abs_entry(&(&qjq.matrix - &ops.jbold.matrix)) < 1e-10);
        let spec_full = Eigh::new(&t.delta).values;
        let spec_restricted = Eigh::new(&ops.dbold).values;
        assert!((spec_full - spec_restricted).amax() < 1e-10);
    }

    #[test]
    fn commuting_chain_locality() {
        let m = HamiltonianModel::ising_chain(3, 0.6, -0.4).unwrap();
        let rep = verify_commuting_locality(&m, 1, &[1.0, 0.5, -0.5], None, true, 1e-9).unwrap();
        assert!(rep.pass(), "{rep:?}");
        // Z_i commutes with ρ, so its image is itself
        let z = rep.entries.iter().find(|e| e.a.letters() == "ZII" && e.power == 1.0).unwrap();
        assert_eq!(z.observed, vec![0]);
    }

    #[test]
    fn locality_needs_decomposition() {
        let m = HamiltonianModel::transverse_ising_chain(2, 1.0, 1.0).unwrap();
        assert!(matches!(
            verify_commuting_locality(&m, 1, &[1.0], None, true, 1e-9),
            Err(Error::MissingDecomposition)
        ));
    }

    #[test]
    fn cap_is_enforced() {
        let m = HamiltonianModel::ising_chain(6, 0.1, 0.1).unwrap();
        let s = build_gibbs(&m, m.true_coeffs().unwrap()).unwrap();
        assert!(matches!(GnsSpace::new(&s), Err(Error::CapExceeded { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn modular_identities_on_random_two_qubit_states(seed in 0u64..10_000, scale in 0.1f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_hermitian(4, &mut rng, scale);
            let rep = verify_modular_identities(&gibbs_of(&h), 1e-9).unwrap();
            prop_assert!(rep.pass(), "{:?}", rep);
        }

        #[test]
        fn restricted_identities_on_random_subsets(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_hermitian(4, &mut rng, 1.0);
            let space = GnsSpace::new(&gibbs_of(&h)).unwrap();
            let t = build_modular(&space).unwrap();
            let mut ps: Vec<PauliString> = space.basis().iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
            if ps.is_empty() {
                ps.push(space.basis()[0]);
            }
            let ops = restricted_ops(&space, &t, &ps).unwrap();
            prop_assert!(ops.verify(1e-10).pass(), "{:?}", ops.verify(1e-10));
        }
    }
}
