//! Matrix energy-entropy balance system built from an expectation table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{antihermitian_part, cmatmul, conj, hermitian_norm, hermitian_part, spectral_norm, CMat, Eigh};
use crate::pauli::PauliString;

pub use crate::oracle::ExpectationTable;

/// `𝐃̃`, `log 𝐃̃`, `𝐇̃_α` and the conditioning constant `K`.
///
/// When `C̃` is not positive definite, `cond_ok` is false, `k` is `None` and
/// the matrix fields are empty.
#[derive(Clone, Debug)]
pub struct EEBSystem {
    pub r: usize,
    pub m: usize,
    pub perturbers: Vec<PauliString>,
    pub terms: Vec<PauliString>,
    pub epsilon0: f64,
    pub cond_ok: bool,
    /// Smallest eigenvalue of `C̃`.
    pub eigen_floor: f64,
    /// `2r‖C̃^{-1}‖`.
    pub k: Option<f64>,
    pub dtilde: CMat,
    pub log_dtilde: CMat,
    pub htilde: Vec<CMat>,
    /// `C̃^{-1/2}`, kept for cross-checks.
    pub c_inv_sqrt: CMat,
}

pub fn pd_tolerance(r: usize) -> f64 {
    1e-10 * r as f64
}

pub fn assemble(table: &ExpectationTable) -> EEBSystem {
    let r = table.r();
    let m = table.m();
    let eig = Eigh::new(&table.c);
    let eigen_floor = if r == 0 { f64::INFINITY } else { eig.min() };
    let empty = CMat::zeros(0, 0);
    let mut sys = EEBSystem {
        r,
        m,
        perturbers: table.perturbers.clone(),
        terms: table.terms.clone(),
        epsilon0: table.epsilon0,
        cond_ok: false,
        eigen_floor,
        k: None,
        dtilde: empty.clone(),
        log_dtilde: empty.clone(),
        htilde: Vec::new(),
        c_inv_sqrt: empty,
    };
    if r == 0 || eigen_floor <= pd_tolerance(r) {
        return sys;
    }
    let c_inv_sqrt = eig.apply(|x| 1.0 / x.sqrt());
    let dtilde = hermitian_part(&cmatmul(&cmatmul(&c_inv_sqrt, &conj(&table.c)), &c_inv_sqrt));
    let log_dtilde = Eigh::new(&dtilde).apply(f64::ln);
    let htilde = {
        use rayon::prelude::*;
        table.b.par_iter().map(|b| cmatmul(&cmatmul(&c_inv_sqrt, b), &c_inv_sqrt)).collect()
    };
    sys.cond_ok = true;
    sys.k = Some(2.0 * r as f64 / eigen_floor);
    sys.dtilde = dtilde;
    sys.log_dtilde = log_dtilde;
    sys.htilde = htilde;
    sys.c_inv_sqrt = c_inv_sqrt;
    sys
}

impl EEBSystem {
    /// `Σ λ_α (𝐇̃_α + 𝐇̃_α†)/2` and `Σ λ_α (𝐇̃_α − 𝐇̃_α†)/2`.
    pub fn combined(&self, lambda: &[f64]) -> (CMat, CMat) {
        let mut plus = CMat::zeros(self.r, self.r);
        let mut minus = CMat::zeros(self.r, self.r);
        for (h, &l) in self.htilde.iter().zip(lambda) {
            plus += hermitian_part(h).scale(l);
            minus += antihermitian_part(h).scale(l);
        }
        (plus, minus)
    }

    /// `(‖Σλ_α(𝐇_α − 𝐇_α†)‖, λ_min(log𝐃 + Σλ_α(𝐇_α + 𝐇_α†)/2))`.
    pub fn ideal_residuals(&self, lambda: &[f64]) -> (f64, f64) {
        let (plus, minus) = self.combined(lambda);
        let anti = spectral_norm(&minus.scale(2.0));
        let floor = Eigh::new(&(&self.log_dtilde + plus)).min();
        (anti, floor)
    }

    pub fn to_dump(&self) -> SystemDump {
        SystemDump {
            r: self.r,
            m: self.m,
            perturbers: self.perturbers.iter().map(|p| p.letters()).collect(),
            terms: self.terms.iter().map(|p| p.letters()).collect(),
            epsilon0: self.epsilon0,
            cond_ok: self.cond_ok,
            eigen_floor: self.eigen_floor,
            k: self.k,
            dtilde: MatrixDump::from(&self.dtilde),
            log_dtilde: MatrixDump::from(&self.log_dtilde),
            htilde: self.htilde.iter().map(MatrixDump::from).collect(),
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_dump())?)?;
        Ok(())
    }
}

/// Dense matrix as row-major `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDump {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl From<&CMat> for MatrixDump {
    fn from(a: &CMat) -> Self {
        let mut data = Vec::with_capacity(a.len());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                data.push([a[(i, j)].re, a[(i, j)].im]);
            }
        }
        Self { rows: a.nrows(), cols: a.ncols(), data }
    }
}

impl MatrixDump {
    pub fn to_matrix(&self) -> CMat {
        CMat::from_fn(self.rows, self.cols, |i, j| {
            let [re, im] = self.data[i * self.cols + j];
            num_complex::Complex64::new(re, im)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemDump {
    pub r: usize,
    pub m: usize,
    pub perturbers: Vec<String>,
    pub terms: Vec<String>,
    pub epsilon0: f64,
    pub cond_ok: bool,
    pub eigen_floor: f64,
    pub k: Option<f64>,
    pub dtilde: MatrixDump,
    pub log_dtilde: MatrixDump,
    pub htilde: Vec<MatrixDump>,
}

/// `μ1 = (2K³ + 3mβK²)ε0`, `μ2 = 3mβK²ε0`.
pub fn relaxation_params(k: f64, epsilon0: f64, m: usize, beta: f64) -> (f64, f64) {
    let mb = 3.0 * m as f64 * beta * k * k;
    ((2.0 * k.powi(3) + mb) * epsilon0, mb * epsilon0)
}

/// `e^{-mβ} d / (3r)`, the a priori noise threshold as literally stated.
pub fn sigma_general(m: usize, beta: f64, d: usize, r: usize) -> f64 {
    (-(m as f64) * beta).exp() * d as f64 / (3.0 * r as f64)
}

/// `e^{-2mβ} / (3r)`: the threshold that follows from `ρ ⪰ e^{-2mβ}/d` for
/// unit-norm Pauli perturbers that are Hilbert-Schmidt orthogonal.
pub fn sigma_conservative(m: usize, beta: f64, r: usize) -> f64 {
    (-2.0 * m as f64 * beta).exp() / (3.0 * r as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub applicable: bool,
    pub k: Option<f64>,
    pub epsilon0: f64,
    pub log_d_deviation: Option<f64>,
    pub log_d_bound: Option<f64>,
    pub h_deviations: Vec<f64>,
    pub h_bound: Option<f64>,
    pub log_d_pass: bool,
    pub h_pass: bool,
}

/// Measured `‖log𝐃 − log𝐃̃‖`, `‖𝐇_α − 𝐇̃_α‖` against `2K³ε0` and `3K²ε0`.
pub fn continuity_report(exact: &EEBSystem, noisy: &EEBSystem, epsilon0: f64) -> ContinuityReport {
    let k = noisy.k;
    let applicable = exact.cond_ok
        && noisy.cond_ok
        && exact.r == noisy.r
        && exact.m == noisy.m
        && k.is_some_and(|k| epsilon0 <= 1.0 / k);
    if !applicable {
        return ContinuityReport {
            applicable,
            k,
            epsilon0,
            log_d_deviation: None,
            log_d_bound: None,
            h_deviations: Vec::new(),
            h_bound: None,
            log_d_pass: false,
            h_pass: false,
        };
    }
    let k = k.unwrap();
    let log_dev = hermitian_norm(&(&exact.log_dtilde - &noisy.log_dtilde));
    let h_devs: Vec<f64> = exact.htilde.iter().zip(&noisy.htilde).map(|(a, b)| spectral_norm(&(a - b))).collect();
    let log_bound = 2.0 * k.powi(3) * epsilon0;
    let h_bound = 3.0 * k * k * epsilon0;
    ContinuityReport {
        applicable,
        k: Some(k),
        epsilon0,
        log_d_deviation: Some(log_dev),
        log_d_bound: Some(log_bound),
        log_d_pass: log_dev <= log_bound,
        h_pass: h_devs.iter().all(|&d| d <= h_bound),
        h_deviations: h_devs,
        h_bound: Some(h_bound),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigvalsh, max_abs_entry, I, ONE};
    use crate::model::{enumerate_pkl, HamiltonianModel};
    use crate::oracle::{build_gibbs, exact_tables, measure_tables, NoiseSpec};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_qubit_system() -> (EEBSystem, ExpectationTable) {
        let m = HamiltonianModel::new(1, vec!["Z".parse().unwrap()]).unwrap();
        let s = build_gibbs(&m, &[std::f64::consts::LN_2]).unwrap();
        let ps: Vec<PauliString> = ["I", "X", "Y", "Z"].iter().map(|s| s.parse().unwrap()).collect();
        let t = exact_tables(&s, &ps, m.terms()).unwrap();
        (assemble(&t), t)
    }

    #[test]
    fn maximally_mixed_gives_identity() {
        let m = HamiltonianModel::ising_chain(2, 1.0, 1.0).unwrap();
        let s = build_gibbs(&m, &[0.0; 3]).unwrap();
        let ps = enumerate_pkl(&m, 2);
        let sys = assemble(&exact_tables(&s, &ps, m.terms()).unwrap());
        let id = CMat::identity(sys.r, sys.r);
        assert!(max_abs_entry(&(&sys.dtilde - &id)) < 1e-13);
        assert!(max_abs_entry(&sys.log_dtilde) < 1e-13);
        assert!((sys.k.unwrap() - 2.0 * sys.r as f64).abs() < 1e-10);
    }

    #[test]
    fn single_qubit_golden() {
        let (sys, t) = single_qubit_system();
        let mut ev: Vec<f64> = eigvalsh(&t.c).iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (got, want) in ev.iter().zip([0.4, 0.4, 1.6, 1.6]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((sys.k.unwrap() - 20.0).abs() < 1e-10);
        let b = &t.b[0];
        assert!((b[(1, 1)] - ONE * 1.2).norm() < 1e-12);
        assert!((b[(1, 2)] + I * 2.0).norm() < 1e-12);
        assert!((b[(2, 1)] - I * 2.0).norm() < 1e-12);
        assert!((b[(2, 2)] - ONE * 1.2).norm() < 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                if !((i == 1 || i == 2) && (j == 1 || j == 2)) {
                    assert!(b[(i, j)].norm() < 1e-15);
                    assert!(sys.htilde[0][(i, j)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn relaxation_examples() {
        assert_eq!(relaxation_params(20.0, 0.0, 1, 1.0), (0.0, 0.0));
        let (mu1, mu2) = relaxation_params(20.0, 1e-4, 1, 1.0);
        assert!((mu1 - 1.72).abs() < 1e-12);
        assert!((mu2 - 0.12).abs() < 1e-12);
        let (a1, a2) = relaxation_params(7.0, 2e-3, 3, 0.4);
        let (b1, b2) = relaxation_params(7.0, 4e-3, 3, 0.4);
        assert!((b1 - 2.0 * a1).abs() < 1e-12 && (b2 - 2.0 * a2).abs() < 1e-12);
    }

    #[test]
    fn sigma_examples() {
        assert!((sigma_general(1, 0.0, 2, 4) - 1.0 / 6.0).abs() < 1e-15);
        assert!(sigma_general(2, 0.5, 4, 10) < sigma_general(1, 0.5, 4, 10));
        assert!(sigma_general(1, 0.7, 4, 10) < sigma_general(1, 0.5, 4, 10));
        assert!((sigma_general(1, 0.5, 4, 20) - sigma_general(1, 0.5, 4, 10) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn conservative_sigma_guarantees_k() {
        // the threshold as literally stated fails already at β = 0, where C = I
        let m = HamiltonianModel::ising_chain(2, 1.0, 1.0).unwrap();
        let s = build_gibbs(&m, &[0.0; 3]).unwrap();
        let ps = enumerate_pkl(&m, 1);
        let r = ps.len();
        let sigma = sigma_general(m.m(), 0.0, 4, r);
        let sys = assemble(&exact_tables(&s, &ps, m.terms()).unwrap());
        assert!(sys.k.unwrap() > 1.0 / sigma);
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = HamiltonianModel::random_local(2, 2, 3, 1.0, &mut rng).unwrap();
            let beta = m.beta().unwrap();
            let s = build_gibbs(&m, m.true_coeffs().unwrap()).unwrap();
            let ps = enumerate_pkl(&m, 1);
            let sc = sigma_conservative(m.m(), beta, ps.len());
            let noisy = measure_tables(&s, &ps, m.terms(), &NoiseSpec::uniform_adversarial(sc, seed)).unwrap();
            assert!(assemble(&noisy).k.unwrap() <= 1.0 / sc);
        }
    }

    #[test]
    fn not_positive_definite_table() {
        let (_, mut t) = single_qubit_system();
        t.c[(0, 3)] = ONE;
        t.c[(3, 0)] = ONE;
        let sys = assemble(&t);
        assert!(!sys.cond_ok);
        assert!(sys.k.is_none());
    }

    #[test]
    fn continuity_on_single_qubit() {
        let (exact, t) = single_qubit_system();
        let same = continuity_report(&exact, &exact, 1e-5);
        assert!(same.applicable);
        assert_eq!(same.log_d_deviation, Some(0.0));
        let m = HamiltonianModel::new(1, vec!["Z".parse().unwrap()]).unwrap();
        let s = build_gibbs(&m, &[std::f64::consts::LN_2]).unwrap();
        let noisy = assemble(&measure_tables(&s, &t.perturbers, m.terms(), &NoiseSpec::uniform_adversarial(1e-5, 2)).unwrap());
        let rep = continuity_report(&exact, &noisy, 1e-5);
        assert!(rep.applicable && rep.log_d_pass && rep.h_pass);
        let rep2 = continuity_report(&exact, &noisy, 2e-5);
        assert!((rep2.h_bound.unwrap() - 2.0 * rep.h_bound.unwrap()).abs() < 1e-15);
        assert!(!continuity_report(&exact, &noisy, 1.0).applicable);
    }

    #[test]
    fn dump_roundtrip() {
        let (sys, _) = single_qubit_system();
        let json = serde_json::to_string(&sys.to_dump()).unwrap();
        let back: SystemDump = serde_json::from_str(&json).unwrap();
        assert_eq!(back.htilde[0].to_matrix(), sys.htilde[0]);
        assert_eq!(back.k, sys.k);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn exact_systems_satisfy_ideal_eeb(seed in 0u64..10_000, n in 2usize..4, ell in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = HamiltonianModel::random_local(n, 2, n, 1.0, &mut rng).unwrap();
            let lambda = m.true_coeffs().unwrap().to_vec();
            let s = build_gibbs(&m, &lambda).unwrap();
            let ps = enumerate_pkl(&m, ell);
            let t = exact_tables(&s, &ps, m.terms()).unwrap();
            let sys = assemble(&t);
            prop_assert!(sys.cond_ok);
            let (anti, floor) = sys.ideal_residuals(&lambda);
            prop_assert!(anti <= 1e-8, "anti {anti}");
            prop_assert!(floor >= -1e-7, "floor {floor}");
            let back = Eigh::new(&sys.log_dtilde).apply(f64::exp);
            prop_assert!(max_abs_entry(&(back - &sys.dtilde)) < 1e-10);
            let kk = 2.0 * sys.r as f64 / crate::linalg::min_eigenvalue(&t.c);
            prop_assert!((sys.k.unwrap() - kk).abs() <= 1e-10 * kk);
            prop_assert!(sys.k.unwrap() >= 2.0);
        }

        #[test]
        fn entrywise_error_propagation(seed in 0u64..10_000, eps in 1e-5f64..1e-2) {
            let m = HamiltonianModel::transverse_ising_chain(2, 0.6, 0.3).unwrap();
            let s = build_gibbs(&m, m.true_coeffs().unwrap()).unwrap();
            let ps = enumerate_pkl(&m, 2);
            let exact = exact_tables(&s, &ps, m.terms()).unwrap();
            let noisy = measure_tables(&s, &ps, m.terms(), &NoiseSpec::uniform_adversarial(eps, seed)).unwrap();
            prop_assert!(hermitian_norm(&(&exact.c - &noisy.c)) <= ps.len() as f64 * eps);
        }
    }
}
