//! Exact Gibbs states by dense diagonalization, and noisy expectation tables.

use std::collections::HashMap;
use std::path::Path;

use log::debug;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, max_abs_entry, CMat, Eigh, ONE, ZERO};
use crate::model::HamiltonianModel;
use crate::pauli::{PauliString, DEFAULT_DENSE_CAP};

/// `ρ = e^{-h} / Tr e^{-h}` together with the eigendecomposition of `h`.
#[derive(Clone, Debug)]
pub struct GibbsState {
    n: usize,
    rho: CMat,
    log_partition: f64,
    beta: f64,
    h_eig: Eigh,
}

impl GibbsState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn rho(&self) -> &CMat {
        &self.rho
    }

    /// `log Tr e^{-h}`.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// `max_α |λ_α|` of the coefficients used to build the state (0 for a bare `h`).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let e = &self.h_eig.values;
        (-(e[e.len() - 1]) - self.log_partition).exp()
    }

    /// `ρ^t` for real `t`, from the stored spectrum of `h`.
    pub fn rho_power(&self, t: f64) -> CMat {
        let lz = self.log_partition;
        self.h_eig.apply(|e| (-t * (e + lz)).exp())
    }

    /// `log ρ`.
    pub fn log_rho(&self) -> CMat {
        let lz = self.log_partition;
        self.h_eig.apply(|e| -(e + lz))
    }

    /// The Hamiltonian `h` (up to the eigensolver's rounding).
    pub fn hamiltonian(&self) -> CMat {
        self.h_eig.apply(|e| e)
    }

    /// Gibbs state of an arbitrary Hermitian `h` of dimension `2^n`.
    pub fn from_hamiltonian(h: &CMat) -> Result<Self> {
        let d = h.nrows();
        if d != h.ncols() || !d.is_power_of_two() || d < 2 {
            return Err(Error::Invalid(format!("Hamiltonian of shape {}x{} is not a qubit operator", d, h.ncols())));
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(0));
        }
        let dev = max_abs_entry(&(h - h.adjoint()));
        if dev > 1e-10 * (1.0 + max_abs_entry(h)) {
            return Err(Error::NotHermitian(dev));
        }
        let n = d.trailing_zeros() as usize;
        let h_eig = Eigh::new(h);
        let emin = h_eig.min();
        let sum: f64 = h_eig.values.iter().map(|e| (-(e - emin)).exp()).sum();
        let log_partition = -emin + sum.ln();
        let lz = log_partition;
        let rho = hermitian_part(&h_eig.apply(|e| (-(e + lz)).exp()));
        let state = Self { n, rho, log_partition, beta: 0.0, h_eig };
        let floor = state.min_eigenvalue();
        if !(floor > 0.0) {
            return Err(Error::NotFaithful(floor));
        }
        Ok(state)
    }

    /// `Tr(ρ P)`.
    pub fn expect(&self, p: &PauliString) -> Result<Complex64> {
        if p.n() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: p.n() });
        }
        Ok(p.trace_with(&self.rho))
    }

    /// `Tr(ρ A)` for a dense operator.
    pub fn expect_dense(&self, a: &CMat) -> Result<Complex64> {
        if a.nrows() != self.dim() || a.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: a.nrows() });
        }
        let mut acc = ZERO;
        for i in 0..self.dim() {
            for k in 0..self.dim() {
                acc += self.rho[(i, k)] * a[(k, i)];
            }
        }
        Ok(acc)
    }
}

/// Gibbs state of `h = Σ λ_α E_α`.
pub fn build_gibbs(model: &HamiltonianModel, lambda: &[f64]) -> Result<GibbsState> {
    build_gibbs_capped(model, lambda, DEFAULT_DENSE_CAP)
}

pub fn build_gibbs_capped(model: &HamiltonianModel, lambda: &[f64], cap: usize) -> Result<GibbsState> {
    let h = model.hamiltonian_dense_capped(lambda, cap)?;
    let mut state = GibbsState::from_hamiltonian(&h)?;
    state.beta = lambda.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok(state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Exact,
    UniformAdversarial,
    GaussianClipped,
    Shots,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    #[serde(default)]
    pub epsilon0: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot_count: Option<u64>,
}

impl NoiseSpec {
    pub fn exact() -> Self {
        Self { mode: NoiseMode::Exact, epsilon0: 0.0, seed: 0, shot_count: None }
    }

    pub fn uniform_adversarial(epsilon0: f64, seed: u64) -> Self {
        Self { mode: NoiseMode::UniformAdversarial, epsilon0, seed, shot_count: None }
    }

    pub fn gaussian_clipped(epsilon0: f64, seed: u64) -> Self {
        Self { mode: NoiseMode::GaussianClipped, epsilon0, seed, shot_count: None }
    }

    pub fn shots(shot_count: u64, epsilon0: f64, seed: u64) -> Self {
        Self { mode: NoiseMode::Shots, epsilon0, seed, shot_count: Some(shot_count) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon0.is_finite() && self.epsilon0 >= 0.0) {
            return Err(Error::Invalid(format!("epsilon0 must be finite and non-negative, got {}", self.epsilon0)));
        }
        if self.mode == NoiseMode::Shots && !matches!(self.shot_count, Some(s) if s > 0) {
            return Err(Error::Invalid("shots mode needs a positive shot_count".into()));
        }
        Ok(())
    }

    /// Independent generator for one observable, keyed by its canonical id.
    fn stream(&self, id: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(id.as_bytes());
        ChaCha8Rng::from_seed(hasher.finalize().into())
    }

    /// Noisy estimate of `c·σ` for a Hermitian Pauli `σ` with `ω(σ) = t`.
    ///
    /// The error lies along `c`, i.e. the estimator measures `σ` and rescales,
    /// and always has modulus at most `ε0`.
    fn estimate(&self, id: &str, c: Complex64, t: f64) -> Complex64 {
        let scale = c.norm();
        let cap = self.epsilon0 / scale;
        let dt = match self.mode {
            NoiseMode::Exact => 0.0,
            NoiseMode::UniformAdversarial => {
                if self.stream(id).gen::<bool>() {
                    cap
                } else {
                    -cap
                }
            }
            NoiseMode::GaussianClipped => {
                let g: f64 = Normal::new(0.0, 0.5).unwrap().sample(&mut self.stream(id));
                g.clamp(-1.0, 1.0) * cap
            }
            NoiseMode::Shots => {
                let shots = self.shot_count.unwrap_or(1);
                let p = ((1.0 + t) / 2.0).clamp(0.0, 1.0);
                let k = Binomial::new(shots, p).unwrap().sample(&mut self.stream(id));
                let mean = 2.0 * k as f64 / shots as f64 - 1.0;
                (mean - t).clamp(-cap, cap)
            }
        };
        c * (t + dt)
    }
}

/// Estimates of `C_ij = ω(P_i P_j)` and `(B_α)_ij = ω(P_i [E_α, P_j])`.
#[derive(Clone, Debug)]
pub struct ExpectationTable {
    pub perturbers: Vec<PauliString>,
    pub terms: Vec<PauliString>,
    pub c: CMat,
    pub b: Vec<CMat>,
    pub epsilon0: f64,
    pub noise: NoiseSpec,
    /// Number of estimates moved by the radial clipping step.
    pub clipped: usize,
}

impl ExpectationTable {
    pub fn r(&self) -> usize {
        self.perturbers.len()
    }

    pub fn m(&self) -> usize {
        self.terms.len()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for row in self.csv_rows() {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_rows(&self) -> Vec<TableRow> {
        let r = self.r();
        let mut rows = Vec::with_capacity(r * r * (1 + self.m()));
        for i in 0..r {
            for j in 0..r {
                let z = self.c[(i, j)];
                rows.push(TableRow { kind: "C".into(), i, j, alpha: None, re: z.re, im: z.im });
            }
        }
        for (alpha, b) in self.b.iter().enumerate() {
            for i in 0..r {
                for j in 0..r {
                    let z = b[(i, j)];
                    rows.push(TableRow { kind: "B".into(), i, j, alpha: Some(alpha), re: z.re, im: z.im });
                }
            }
        }
        rows
    }

    /// Rebuild a table from CSV written by [`ExpectationTable::write_csv`].
    pub fn read_csv(
        path: impl AsRef<Path>,
        perturbers: Vec<PauliString>,
        terms: Vec<PauliString>,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let r = perturbers.len();
        let m = terms.len();
        let mut c = CMat::zeros(r, r);
        let mut b = vec![CMat::zeros(r, r); m];
        let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
        for row in rd.deserialize::<TableRow>() {
            let row = row.map_err(csv_err)?;
            if row.i >= r || row.j >= r {
                return Err(Error::DimensionMismatch { expected: r, found: row.i.max(row.j) + 1 });
            }
            let z = Complex64::new(row.re, row.im);
            match (row.kind.as_str(), row.alpha) {
                ("C", None) => c[(row.i, row.j)] = z,
                ("B", Some(a)) if a < m => b[a][(row.i, row.j)] = z,
                _ => return Err(Error::Invalid(format!("bad table row {row:?}"))),
            }
        }
        Ok(Self { perturbers, terms, c, b, epsilon0: noise.epsilon0, noise, clipped: 0 })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Invalid(format!("csv: {e}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub kind: String,
    pub i: usize,
    pub j: usize,
    pub alpha: Option<usize>,
    pub re: f64,
    pub im: f64,
}

fn clip_radius(z: Complex64, radius: f64, clipped: &mut usize) -> Complex64 {
    let a = z.norm();
    // Exact values can overshoot the radius by rounding; leave those alone.
    if a > radius * (1.0 + 1e-14) {
        *clipped += 1;
        z * (radius / a)
    } else {
        z
    }
}

/// Tabulate every `P_iP_j` and `P_i[E_α,P_j]` on `state` through the noise model.
pub fn measure_tables(
    state: &GibbsState,
    perturbers: &[PauliString],
    terms: &[PauliString],
    noise: &NoiseSpec,
) -> Result<ExpectationTable> {
    noise.validate()?;
    let n = state.n();
    for p in perturbers.iter().chain(terms) {
        if p.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: p.n() });
        }
    }
    let r = perturbers.len();
    let m = terms.len();

    // Expectations of every canonical Pauli that occurs, computed once.
    let mut needed: Vec<(u64, u64)> = Vec::new();
    for a in perturbers {
        for b in perturbers {
            let ab = a * b;
            needed.push((ab.x_mask(), ab.z_mask()));
            for e in terms {
                let aeb = &(a * e) * b;
                needed.push((aeb.x_mask(), aeb.z_mask()));
            }
        }
    }
    needed.sort_unstable();
    needed.dedup();
    let values: HashMap<(u64, u64), f64> = needed
        .par_iter()
        .map(|&(x, z)| ((x, z), PauliString::hermitian_from_masks(n, x, z).trace_with(state.rho()).re))
        .collect();
    let omega = |p: &PauliString| -> (Complex64, f64) { (p.coefficient(), values[&(p.x_mask(), p.z_mask())]) };

    let mut clipped = 0usize;
    let mut c = CMat::from_element(r, r, ZERO);
    for i in 0..r {
        c[(i, i)] = ONE;
        for j in i + 1..r {
            let (pi, pj) = (&perturbers[i], &perturbers[j]);
            // One estimate per unordered pair; the id does not depend on list order.
            let swap = pj.letters() < pi.letters();
            let (a, b) = if swap { (pj, pi) } else { (pi, pj) };
            let prod = a * b;
            let (coef, t) = omega(&prod);
            let id = format!("PP|{}|{}", a.letters(), b.letters());
            let est = clip_radius(noise.estimate(&id, coef, t), 1.0, &mut clipped);
            let est = if swap { est.conj() } else { est };
            c[(i, j)] = est;
            c[(j, i)] = est.conj();
        }
    }

    let per_term: Vec<(CMat, usize)> = terms
        .par_iter()
        .map(|e| {
            let mut local_clips = 0usize;
            let mut bm = CMat::from_element(r, r, ZERO);
            for (i, pi) in perturbers.iter().enumerate() {
                for (j, pj) in perturbers.iter().enumerate() {
                    if e.commutes_unchecked(pj) {
                        continue;
                    }
                    // [E, P] = 2 E P when the two anticommute.
                    let prod = &(pi * e) * pj;
                    let (coef, t) = omega(&prod);
                    let id = format!("PEP|{}|{}|{}", pi.letters(), e.letters(), pj.letters());
                    let est = noise.estimate(&id, coef * 2.0, t);
                    bm[(i, j)] = clip_radius(est, 2.0, &mut local_clips);
                }
            }
            (bm, local_clips)
        })
        .collect();
    let mut b = Vec::with_capacity(m);
    for (bm, k) in per_term {
        clipped += k;
        b.push(bm);
    }
    if clipped > 0 {
        debug!("radial clipping adjusted {clipped} estimates");
    }
    Ok(ExpectationTable {
        perturbers: perturbers.to_vec(),
        terms: terms.to_vec(),
        c,
        b,
        epsilon0: noise.epsilon0,
        noise: noise.clone(),
        clipped,
    })
}

/// Noise-free tables.
pub fn exact_tables(state: &GibbsState, perturbers: &[PauliString], terms: &[PauliString]) -> Result<ExpectationTable> {
    measure_tables(state, perturbers, terms, &NoiseSpec::exact())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::enumerate_pkl;
    use proptest::prelude::*;

    fn single_qubit() -> (HamiltonianModel, GibbsState) {
        let m = HamiltonianModel::new(1, vec!["Z".parse().unwrap()]).unwrap();
        let s = build_gibbs(&m, &[std::f64::consts::LN_2]).unwrap();
        (m, s)
    }

    fn basis1() -> Vec<PauliString> {
        ["I", "X", "Y", "Z"].iter().map(|s| s.parse().unwrap()).collect()
    }

    /// Entry-by-entry dense oracle for both tables.
    fn dense_tables(state: &GibbsState, ps: &[PauliString], es: &[PauliString]) -> (CMat, Vec<CMat>) {
        let r = ps.len();
        let d: Vec<CMat> = ps.iter().map(|p| p.to_dense().unwrap()).collect();
        let c = CMat::from_fn(r, r, |i, j| state.expect_dense(&(&d[i] * &d[j])).unwrap());
        let b = es
            .iter()
            .map(|e| {
                let e = e.to_dense().unwrap();
                CMat::from_fn(r, r, |i, j| {
                    let comm = &e * &d[j] - &d[j] * &e;
                    state.expect_dense(&(&d[i] * comm)).unwrap()
                })
            })
            .collect();
        (c, b)
    }

    #[test]
    fn infinite_temperature_is_maximally_mixed() {
        let m = HamiltonianModel::ising_chain(3, 1.0, 1.0).unwrap();
        let s = build_gibbs(&m, &vec![0.0; m.m()]).unwrap();
        assert!(max_abs_entry(&(s.rho() - CMat::identity(8, 8).scale(0.125))) < 1e-15);
        assert!((s.log_partition() - 8f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn single_qubit_state() {
        let (_, s) = single_qubit();
        assert!((s.rho()[(0, 0)].re - 0.2).abs() < 1e-15);
        assert!((s.rho()[(1, 1)].re - 0.8).abs() < 1e-15);
        assert!((s.rho().trace().re - 1.0).abs() < 1e-12);
        assert!((s.expect(&"Z".parse().unwrap()).unwrap().re + 0.6).abs() < 1e-15);
        assert!((s.expect(&PauliString::identity(1)).unwrap() - ONE).norm() < 1e-15);
        let xy = "X".parse::<PauliString>().unwrap() * "Y".parse().unwrap();
        assert!((s.expect(&xy).unwrap() - Complex64::new(0.0, -0.6)).norm() < 1e-15);
    }

    #[test]
    fn errors() {
        let m = HamiltonianModel::new(1, vec!["Z".parse().unwrap()]).unwrap();
        assert!(matches!(build_gibbs(&m, &[f64::NAN]), Err(Error::NonFinite(0))));
        let big = HamiltonianModel::new(13, vec![PauliString::single(13, 0, 'Z').unwrap()]).unwrap();
        assert!(matches!(build_gibbs(&big, &[1.0]), Err(Error::CapExceeded { .. })));
        let (_, s) = single_qubit();
        assert!(s.expect(&"ZZ".parse().unwrap()).is_err());
        assert!(s.expect_dense(&CMat::zeros(4, 4)).is_err());
    }

    #[test]
    fn exact_tables_match_dense_oracle() {
        let m = HamiltonianModel::transverse_ising_chain(3, 0.7, -0.4).unwrap();
        let s = build_gibbs(&m, m.true_coeffs().unwrap()).unwrap();
        let ps = enumerate_pkl(&m, 1);
        let t = exact_tables(&s, &ps, m.terms()).unwrap();
        let (c, b) = dense_tables(&s, &ps, m.terms());
        assert!(max_abs_entry(&(&t.c - c)) < 1e-13);
        for (x, y) in t.b.iter().zip(&b) {
            assert!(max_abs_entry(&(x - y)) < 1e-13);
        }
        assert_eq!(t.clipped, 0);
        assert!(crate::linalg::min_eigenvalue(&t.c) > 0.0);
    }

    #[test]
    fn adversarial_noise_saturates_the_bound() {
        let (m, s) = single_qubit();
        let ps = basis1();
        let exact = exact_tables(&s, &ps, m.terms()).unwrap();
        let noisy = measure_tables(&s, &ps, m.terms(), &NoiseSpec::uniform_adversarial(0.01, 3)).unwrap();
        let dev = max_abs_entry(&(&noisy.c - &exact.c));
        assert!(dev <= 0.01 + 1e-15);
        assert!(dev > 0.01 - 1e-12);
        assert!(max_abs_entry(&(&noisy.b[0] - &exact.b[0])) <= 0.01 + 1e-15);
        assert_eq!(noisy.c, noisy.c.adjoint());
    }

    #[test]
    fn shots_converge() {
        let m = HamiltonianModel::transverse_ising_chain(2, 0.5, 0.8).unwrap();
        let s = build_gibbs(&m, m.true_coeffs().unwrap()).unwrap();
        let ps = enumerate_pkl(&m, 1);
        let exact = exact_tables(&s, &ps, m.terms()).unwrap();
        let noisy = measure_tables(&s, &ps, m.terms(), &NoiseSpec::shots(1_000_000, 1.0, 11)).unwrap();
        // tolerance per unit operator norm: P_iP_j has norm 1, P_i[E,P_j] norm 2
        assert!(max_abs_entry(&(&noisy.c - &exact.c)) < 5e-3);
        for (x, y) in noisy.b.iter().zip(&exact.b) {
            assert!(max_abs_entry(&(x - y)) < 2.0 * 5e-3);
        }
        let coarse = measure_tables(&s, &ps, m.terms(), &NoiseSpec::shots(10_000, 1.0, 11)).unwrap();
        assert!(max_abs_entry(&(&coarse.c - &exact.c)) > max_abs_entry(&(&noisy.c - &exact.c)));
    }

    #[test]
    fn tables_do_not_depend_on_perturber_order() {
        let m = HamiltonianModel::transverse_ising_chain(2, 0.5, 0.8).unwrap();
        let s = build_gibbs(&m, m.true_coeffs().unwrap()).unwrap();
        let ps = enumerate_pkl(&m, 1);
        let mut rev = ps.clone();
        rev.reverse();
        let noise = NoiseSpec::gaussian_clipped(1e-3, 5);
        let a = measure_tables(&s, &ps, m.terms(), &noise).unwrap();
        let b = measure_tables(&s, &rev, m.terms(), &noise).unwrap();
        let r = ps.len();
        for i in 0..r {
            for j in 0..r {
                assert_eq!(a.c[(i, j)], b.c[(r - 1 - i, r - 1 - j)]);
                assert_eq!(a.b[0][(i, j)], b.b[0][(r - 1 - i, r - 1 - j)]);
            }
        }
    }

    #[test]
    fn csv_roundtrip() {
        let (m, s) = single_qubit();
        let noise = NoiseSpec::gaussian_clipped(1e-3, 1);
        let t = measure_tables(&s, &basis1(), m.terms(), &noise).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tables.csv");
        t.write_csv(&path).unwrap();
        let back = ExpectationTable::read_csv(&path, basis1(), m.terms().to_vec(), noise).unwrap();
        assert_eq!(back.c, t.c);
        assert_eq!(back.b, t.b);
    }

    #[test]
    fn invalid_noise_is_rejected() {
        let (m, s) = single_qubit();
        let bad = NoiseSpec { mode: NoiseMode::Shots, epsilon0: 0.1, seed: 0, shot_count: None };
        assert!(measure_tables(&s, &basis1(), m.terms(), &bad).is_err());
        assert!(measure_tables(&s, &basis1(), m.terms(), &NoiseSpec::uniform_adversarial(-1.0, 0)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn noisy_tables_respect_assumptions(seed in 0u64..10_000, eps in 1e-4f64..0.3, mode in 0usize..3) {
            let m = HamiltonianModel::transverse_ising_chain(2, 0.9, -0.6).unwrap();
            let s = build_gibbs(&m, m.true_coeffs().unwrap()).unwrap();
            let ps = enumerate_pkl(&m, 1);
            let noise = match mode {
                0 => NoiseSpec::uniform_adversarial(eps, seed),
                1 => NoiseSpec::gaussian_clipped(eps, seed),
                _ => NoiseSpec::shots(200, eps, seed),
            };
            let exact = exact_tables(&s, &ps, m.terms()).unwrap();
            let noisy = measure_tables(&s, &ps, m.terms(), &noise).unwrap();
            prop_assert_eq!(&noisy.c, &noisy.c.adjoint());
            for i in 0..ps.len() {
                prop_assert_eq!(noisy.c[(i, i)], ONE);
            }
            prop_assert!(max_abs_entry(&(&noisy.c - &exact.c)) <= eps * (1.0 + 1e-12));
            prop_assert!(noisy.c.iter().all(|z| z.norm() <= 1.0 + 1e-15));
            for (x, y) in noisy.b.iter().zip(&exact.b) {
                prop_assert!(max_abs_entry(&(x - y)) <= eps * (1.0 + 1e-12));
                prop_assert!(x.iter().all(|z| z.norm() <= 2.0 + 1e-15));
            }
            let again = measure_tables(&s, &ps, m.terms(), &noise).unwrap();
            prop_assert_eq!(again.c, noisy.c);
            prop_assert_eq!(again.b, noisy.b);
        }

        #[test]
        fn gibbs_state_is_normalized_and_faithful(seed in 0u64..10_000) {
            use rand::SeedableRng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = HamiltonianModel::random_local(3, 2, 4, 1.0, &mut rng).unwrap();
            let s = build_gibbs(&m, m.true_coeffs().unwrap()).unwrap();
            prop_assert!((s.rho().trace().re - 1.0).abs() < 1e-12);
            prop_assert!(max_abs_entry(&(s.rho() - s.rho().adjoint())) < 1e-15);
            prop_assert!(s.min_eigenvalue() > 0.0);
            let back = s.rho_power(0.5) * s.rho_power(0.5);
            prop_assert!(max_abs_entry(&(back - s.rho())) < 1e-13);
            let (_, _) = (s.log_rho(), s.hamiltonian());
        }
    }
}
