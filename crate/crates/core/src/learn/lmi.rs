//! Linear matrix inequality problems and Farkas-type infeasibility certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, max_abs_entry, min_eigenvalue, trace_product, CMat};

/// `F(x) = F_0 + Σ x_i F_i` with Hermitian `F_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianAffine {
    pub constant: CMat,
    pub coeffs: Vec<CMat>,
}

impl HermitianAffine {
    /// Builds the map, replacing every matrix by its Hermitian part.
    pub fn new(constant: CMat, coeffs: Vec<CMat>) -> Result<Self> {
        let n = constant.nrows();
        if constant.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: constant.ncols() });
        }
        for c in &coeffs {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: c.nrows() });
            }
        }
        Ok(Self { constant: hermitian_part(&constant), coeffs: coeffs.iter().map(hermitian_part).collect() })
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn nvars(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        let mut out = self.constant.clone();
        for (c, &v) in self.coeffs.iter().zip(x) {
            if v != 0.0 {
                out += c.scale(v);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Optimize `objective·x` subject to every PSD block `⪰ 0`, every equality
/// block `= 0`, and the per-variable bounds.
#[derive(Clone, Debug)]
pub struct LmiProblem {
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub psd_blocks: Vec<HermitianAffine>,
    pub equalities: Vec<HermitianAffine>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl LmiProblem {
    pub fn new(nvars: usize, sense: Sense) -> Self {
        Self {
            objective: vec![0.0; nvars],
            sense,
            psd_blocks: Vec::new(),
            equalities: Vec::new(),
            lower: vec![None; nvars],
            upper: vec![None; nvars],
        }
    }

    pub fn nvars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nvars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.lower.len().min(self.upper.len()) });
        }
        for b in self.psd_blocks.iter().chain(&self.equalities) {
            if b.nvars() != n {
                return Err(Error::DimensionMismatch { expected: n, found: b.nvars() });
            }
        }
        if let Some(i) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        for i in 0..n {
            if let (Some(l), Some(u)) = (self.lower[i], self.upper[i]) {
                if l > u {
                    return Err(Error::Invalid(format!("empty bound interval [{l}, {u}] on variable {i}")));
                }
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue over all PSD blocks, largest equality residual and
    /// largest bound violation at `x`.
    pub fn violation(&self, x: &[f64]) -> (f64, f64, f64) {
        let psd = self.psd_blocks.iter().map(|b| min_eigenvalue(&b.eval(x))).fold(f64::INFINITY, f64::min);
        let eq = self.equalities.iter().map(|b| max_abs_entry(&b.eval(x))).fold(0.0, f64::max);
        let mut bound = 0.0_f64;
        for (i, &v) in x.iter().enumerate() {
            if let Some(l) = self.lower[i] {
                bound = bound.max(l - v);
            }
            if let Some(u) = self.upper[i] {
                bound = bound.max(v - u);
            }
        }
        (psd, eq, bound)
    }
}

/// Multipliers proving that no `x` satisfies the constraints.
///
/// For every `x`, the Lagrangian
/// `Σ_k ⟨Y_k, F_k(x)⟩ + Σ_e ⟨W_e, E_e(x)⟩ + Σ_i lower_i (x_i − l_i) + upper_i (u_i − x_i)`
/// is nonnegative on the feasible set. A certificate makes it an affine
/// function with vanishing slope and negative constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(with = "crate::learn::cmat_serde::vec")]
    pub psd: Vec<CMat>,
    #[serde(with = "crate::learn::cmat_serde::vec")]
    pub equalities: Vec<CMat>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    /// Smallest eigenvalue over the `Y_k` (must be nonnegative).
    pub min_multiplier_eigenvalue: f64,
    /// Smallest bound multiplier (must be nonnegative).
    pub min_bound_multiplier: f64,
    /// Euclidean norm of the slope of the Lagrangian in `x`.
    pub slope_norm: f64,
    /// Value of the Lagrangian at `x = 0`.
    pub constant: f64,
    /// Total weight placed on the variable bounds.
    pub bound_mass: f64,
    pub valid: bool,
}

impl Certificate {
    /// Slope and constant of the Lagrangian.
    pub fn lagrangian(&self, p: &LmiProblem) -> (Vec<f64>, f64) {
        let n = p.nvars();
        let mut slope = vec![0.0; n];
        let mut constant = 0.0;
        for (y, b) in self.psd.iter().zip(&p.psd_blocks) {
            constant += trace_product(y, &b.constant);
            for (i, c) in b.coeffs.iter().enumerate() {
                slope[i] += trace_product(y, c);
            }
        }
        for (w, e) in self.equalities.iter().zip(&p.equalities) {
            constant += trace_product(w, &e.constant);
            for (i, c) in e.coeffs.iter().enumerate() {
                slope[i] += trace_product(w, c);
            }
        }
        for i in 0..n {
            if let Some(l) = p.lower[i] {
                slope[i] += self.lower[i];
                constant -= self.lower[i] * l;
            }
            if let Some(u) = p.upper[i] {
                slope[i] -= self.upper[i];
                constant += self.upper[i] * u;
            }
        }
        (slope, constant)
    }

    /// Checks the certificate against `p`. The slope must be small enough that
    /// the Lagrangian stays negative over the bounded box, or zero to `tol`
    /// when some variable is unbounded.
    pub fn verify(&self, p: &LmiProblem, tol: f64) -> CertificateCheck {
        let (slope, constant) = self.lagrangian(p);
        let min_eig = self.psd.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min);
        let min_bound = self.lower.iter().chain(&self.upper).copied().fold(f64::INFINITY, f64::min);
        let slope_norm = slope.iter().map(|s| s * s).sum::<f64>().sqrt();
        let mass: f64 = self.psd.iter().map(|y| y.trace().re).sum::<f64>()
            + self.equalities.iter().map(|w| crate::linalg::frobenius(w)).sum::<f64>()
            + self.lower.iter().chain(&self.upper).sum::<f64>();
        let bound_mass = self.lower.iter().chain(&self.upper).sum::<f64>();
        // worst case of the slope term over the bound box
        let mut spread = 0.0;
        let mut unbounded = false;
        for (i, s) in slope.iter().enumerate() {
            match (p.lower[i], p.upper[i]) {
                (Some(l), Some(u)) => spread += s.abs() * l.abs().max(u.abs()),
                _ => unbounded = true,
            }
        }
        let slope_ok = if unbounded { slope_norm <= tol * mass.max(1e-300) } else { true };
        let valid = min_eig.min(0.0) >= -tol * mass.max(1e-300)
            && min_bound.min(0.0) >= -tol * mass.max(1e-300)
            && slope_ok
            && constant + spread < 0.0;
        CertificateCheck {
            min_multiplier_eigenvalue: if min_eig.is_finite() { min_eig } else { 0.0 },
            min_bound_multiplier: if min_bound.is_finite() { min_bound } else { 0.0 },
            slope_norm,
            constant,
            bound_mass,
            valid,
        }
    }
}
