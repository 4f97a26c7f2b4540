//! Hamiltonian ansatz, dual interaction graph and the perturber hierarchy.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, ZERO};
use crate::pauli::{PauliString, DEFAULT_DENSE_CAP};

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianModel {
    n: usize,
    terms: Vec<PauliString>,
    true_coeffs: Option<Vec<f64>>,
    commuting_decomposition: Option<Vec<(PauliString, f64)>>,
}

fn check_term(n: usize, p: &PauliString) -> Result<()> {
    if p.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p.n() });
    }
    if p.letter_phase() != 0 {
        return Err(Error::InvalidModel(format!("term {p} is not in canonical selfadjoint form")));
    }
    Ok(())
}

impl HamiltonianModel {
    pub fn new(n: usize, terms: Vec<PauliString>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidModel("model has no terms".into()));
        }
        let mut seen = HashSet::new();
        for t in &terms {
            check_term(n, t)?;
            if t.is_identity() {
                return Err(Error::InvalidModel("identity is not a valid Hamiltonian term".into()));
            }
            if !seen.insert((t.x_mask(), t.z_mask())) {
                return Err(Error::InvalidModel(format!("duplicate term {t}")));
            }
        }
        Ok(Self { n, terms, true_coeffs: None, commuting_decomposition: None })
    }

    pub fn with_coeffs(mut self, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != self.terms.len() {
            return Err(Error::DimensionMismatch { expected: self.terms.len(), found: coeffs.len() });
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        self.true_coeffs = Some(coeffs);
        if self.commuting_decomposition.is_some() {
            self.check_decomposition()?;
        }
        Ok(self)
    }

    /// Attach a commuting decomposition `h = Σ ν_α F_α`. Requires true coefficients.
    pub fn with_decomposition(mut self, decomposition: Vec<(PauliString, f64)>) -> Result<Self> {
        self.commuting_decomposition = Some(decomposition);
        self.check_decomposition()?;
        Ok(self)
    }

    fn check_decomposition(&self) -> Result<()> {
        let dec = self.commuting_decomposition.as_ref().ok_or(Error::MissingDecomposition)?;
        let lambda = self
            .true_coeffs
            .as_ref()
            .ok_or_else(|| Error::InvalidModel("commuting decomposition without coefficients".into()))?;
        if dec.len() != self.terms.len() {
            return Err(Error::DimensionMismatch { expected: self.terms.len(), found: dec.len() });
        }
        for (alpha, (f, nu)) in dec.iter().enumerate() {
            check_term(self.n, f)?;
            if !nu.is_finite() {
                return Err(Error::NonFinite(alpha));
            }
            if f.support_mask() & !self.terms[alpha].support_mask() != 0 {
                return Err(Error::InvalidModel(format!(
                    "support of F_{alpha} = {f} is not inside the support of {}",
                    self.terms[alpha]
                )));
            }
        }
        for (a, (fa, _)) in dec.iter().enumerate() {
            for (fb, _) in &dec[a + 1..] {
                if !fa.commutes_unchecked(fb) {
                    return Err(Error::InvalidModel(format!("decomposition terms {fa} and {fb} do not commute")));
                }
            }
        }
        // Paulis form a basis, so equality of the coefficient maps is equality of operators.
        let mut diff: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        for (e, l) in self.terms.iter().zip(lambda) {
            *diff.entry((e.x_mask(), e.z_mask())).or_default() += l;
        }
        for (f, nu) in dec {
            *diff.entry((f.x_mask(), f.z_mask())).or_default() -= nu;
        }
        let scale = lambda.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if let Some(bad) = diff.values().find(|v| v.abs() > 1e-12 * scale) {
            return Err(Error::InvalidModel(format!(
                "commuting decomposition does not reproduce the Hamiltonian (residual {bad:e})"
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[PauliString] {
        &self.terms
    }

    pub fn true_coeffs(&self) -> Option<&[f64]> {
        self.true_coeffs.as_deref()
    }

    pub fn commuting_decomposition(&self) -> Option<&[(PauliString, f64)]> {
        self.commuting_decomposition.as_deref()
    }

    /// Largest term support size `k`.
    pub fn locality(&self) -> usize {
        self.terms.iter().map(|t| t.weight()).max().unwrap_or(0)
    }

    /// `max_α |λ_α|` of the fixture coefficients.
    pub fn beta(&self) -> Option<f64> {
        self.true_coeffs.as_ref().map(|c| c.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
    }

    /// Dense `Σ λ_α E_α`.
    pub fn hamiltonian_dense(&self, lambda: &[f64]) -> Result<CMat> {
        self.hamiltonian_dense_capped(lambda, DEFAULT_DENSE_CAP)
    }

    pub fn hamiltonian_dense_capped(&self, lambda: &[f64], cap: usize) -> Result<CMat> {
        if lambda.len() != self.m() {
            return Err(Error::DimensionMismatch { expected: self.m(), found: lambda.len() });
        }
        if self.n > cap {
            return Err(Error::CapExceeded { n: self.n, cap });
        }
        if let Some(i) = lambda.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let d = 1usize << self.n;
        let mut h = CMat::from_element(d, d, ZERO);
        for (e, &l) in self.terms.iter().zip(lambda) {
            let act = e.dense_action();
            for b in 0..d {
                let (row, v) = act(b);
                h[(row, b)] += v * l;
            }
        }
        Ok(h)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            n: self.n,
            terms: self
                .terms
                .iter()
                .enumerate()
                .map(|(i, p)| TermEntry { pauli: p.letters(), coeff: self.true_coeffs.as_ref().map(|c| c[i]) })
                .collect(),
            commuting_decomposition: self.commuting_decomposition.as_ref().map(|d| {
                d.iter().map(|(p, c)| DecompositionEntry { pauli: p.letters(), coeff: *c }).collect()
            }),
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    /// Qubit `i` coupled to `i+1` by `ZZ`, plus a `Z` field on every qubit.
    /// Commuting, so the decomposition is attached.
    pub fn ising_chain(n: usize, coupling: f64, field: f64) -> Result<Self> {
        let mut terms = Vec::new();
        let mut coeffs = Vec::new();
        for i in 0..n.saturating_sub(1) {
            terms.push(PauliString::from_sparse(n, &[(i, 'Z'), (i + 1, 'Z')])?);
            coeffs.push(coupling);
        }
        for i in 0..n {
            terms.push(PauliString::single(n, i, 'Z')?);
            coeffs.push(field);
        }
        let dec = terms.iter().copied().zip(coeffs.iter().copied()).collect();
        Self::new(n, terms)?.with_coeffs(coeffs)?.with_decomposition(dec)
    }

    /// `ZZ` chain with a transverse `X` field. Not commuting.
    pub fn transverse_ising_chain(n: usize, coupling: f64, field: f64) -> Result<Self> {
        let mut terms = Vec::new();
        let mut coeffs = Vec::new();
        for i in 0..n.saturating_sub(1) {
            terms.push(PauliString::from_sparse(n, &[(i, 'Z'), (i + 1, 'Z')])?);
            coeffs.push(coupling);
        }
        for i in 0..n {
            terms.push(PauliString::single(n, i, 'X')?);
            coeffs.push(field);
        }
        Self::new(n, terms)?.with_coeffs(coeffs)
    }

    /// Random `k`-local model: `num_terms` distinct Paulis, each on a random
    /// set of `1..=k` qubits with random non-identity letters, and coefficients
    /// uniform in `[-coeff_bound, coeff_bound]`.
    pub fn random_local<R: Rng + ?Sized>(
        n: usize,
        k: usize,
        num_terms: usize,
        coeff_bound: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::InvalidModel(format!("locality {k} invalid for {n} qubits")));
        }
        let qubits: Vec<usize> = (0..n).collect();
        let mut seen = HashSet::new();
        let mut terms = Vec::new();
        let mut attempts = 0;
        while terms.len() < num_terms {
            attempts += 1;
            if attempts > 1000 * num_terms.max(1) {
                return Err(Error::InvalidModel("could not draw enough distinct terms".into()));
            }
            let w = rng.gen_range(1..=k);
            let ops: Vec<(usize, char)> = qubits
                .choose_multiple(rng, w)
                .map(|&q| (q, *['X', 'Y', 'Z'].choose(rng).unwrap()))
                .collect();
            let p = PauliString::from_sparse(n, &ops)?;
            if seen.insert((p.x_mask(), p.z_mask())) {
                terms.push(p);
            }
        }
        let coeffs = (0..num_terms).map(|_| rng.gen_range(-coeff_bound..=coeff_bound)).collect();
        Self::new(n, terms)?.with_coeffs(coeffs)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermEntry {
    pub pauli: String,
    pub coeff: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecompositionEntry {
    pub pauli: String,
    pub coeff: f64,
}

/// On-disk model format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub terms: Vec<TermEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commuting_decomposition: Option<Vec<DecompositionEntry>>,
}

impl TryFrom<ModelFile> for HamiltonianModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let parse = |s: &str| -> Result<PauliString> {
            let p: PauliString = s.parse()?;
            if p.n() != f.n {
                return Err(Error::DimensionMismatch { expected: f.n, found: p.n() });
            }
            Ok(p)
        };
        let terms = f.terms.iter().map(|t| parse(&t.pauli)).collect::<Result<Vec<_>>>()?;
        let mut model = HamiltonianModel::new(f.n, terms)?;
        let given = f.terms.iter().filter(|t| t.coeff.is_some()).count();
        if given == f.terms.len() {
            model = model.with_coeffs(f.terms.iter().map(|t| t.coeff.unwrap()).collect())?;
        } else if given != 0 {
            return Err(Error::InvalidModel("coefficients must be given for all terms or none".into()));
        }
        if let Some(dec) = f.commuting_decomposition {
            let dec = dec.iter().map(|d| Ok((parse(&d.pauli)?, d.coeff))).collect::<Result<Vec<_>>>()?;
            model = model.with_decomposition(dec)?;
        }
        Ok(model)
    }
}

/// Graph on the terms, with an edge wherever two supports overlap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DualInteractionGraph {
    adjacency: Vec<BTreeSet<usize>>,
}

impl DualInteractionGraph {
    pub fn from_adjacency(adjacency: Vec<BTreeSet<usize>>) -> Self {
        Self { adjacency }
    }

    pub fn m(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.adjacency[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|s| s.len()).sum::<usize>() / 2
    }

    /// Maximum vertex degree `𝔡`.
    pub fn degree(&self) -> usize {
        self.adjacency.iter().map(|s| s.len()).max().unwrap_or(0)
    }
}

pub fn build_dual_graph(model: &HamiltonianModel) -> DualInteractionGraph {
    let m = model.m();
    let supp: Vec<u64> = model.terms().iter().map(|t| t.support_mask()).collect();
    let mut adjacency = vec![BTreeSet::new(); m];
    for a in 0..m {
        for b in a + 1..m {
            if supp[a] & supp[b] != 0 {
                adjacency[a].insert(b);
                adjacency[b].insert(a);
            }
        }
    }
    DualInteractionGraph { adjacency }
}

/// All connected vertex sets of size `1..=ell`, sorted ascending, ordered by
/// size and then lexicographically.
pub fn enumerate_connected_subsets(g: &DualInteractionGraph, ell: usize) -> Vec<Vec<usize>> {
    let mut out: BTreeSet<(usize, Vec<usize>)> = BTreeSet::new();
    if ell == 0 {
        return Vec::new();
    }
    for root in 0..g.m() {
        // Sets grown from `root` only ever add larger vertices, so each set is
        // generated from its minimum and nowhere else.
        let mut layer: BTreeSet<Vec<usize>> = BTreeSet::from([vec![root]]);
        for size in 1..=ell {
            let mut next = BTreeSet::new();
            for s in &layer {
                out.insert((size, s.clone()));
                if size == ell {
                    continue;
                }
                for &v in s {
                    for &u in g.neighbors(v) {
                        if u > root && !s.contains(&u) {
                            let mut t = s.clone();
                            t.push(u);
                            t.sort_unstable();
                            next.insert(t);
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            layer = next;
        }
    }
    out.into_iter().map(|(_, s)| s).collect()
}

#[derive(Clone, Copy, Debug)]
pub struct PklOptions {
    pub include_identity: bool,
}

impl Default for PklOptions {
    fn default() -> Self {
        Self { include_identity: true }
    }
}

/// Qubit masks of the admissible unions that are maximal under inclusion.
pub fn admissible_unions(model: &HamiltonianModel, ell: usize) -> Vec<u64> {
    let g = build_dual_graph(model);
    let unions: BTreeSet<u64> = enumerate_connected_subsets(&g, ell)
        .iter()
        .map(|s| s.iter().fold(0u64, |m, &a| m | model.terms()[a].support_mask()))
        .collect();
    unions
        .iter()
        .copied()
        .filter(|&u| !unions.iter().any(|&w| w != u && u & !w == 0))
        .collect()
}

/// The level-`ell` perturber set in canonical order.
pub fn enumerate_pkl(model: &HamiltonianModel, ell: usize) -> Vec<PauliString> {
    enumerate_pkl_with(model, ell, PklOptions::default())
}

pub fn enumerate_pkl_with(model: &HamiltonianModel, ell: usize, opts: PklOptions) -> Vec<PauliString> {
    let n = model.n();
    let mut seen: HashSet<(u64, u64)> = HashSet::new();
    for u in admissible_unions(model, ell) {
        let qubits: Vec<usize> = (0..n).filter(|q| (u >> q) & 1 == 1).collect();
        let w = qubits.len();
        for code in 0..(1u64 << (2 * w)) {
            let (mut x, mut z) = (0u64, 0u64);
            for (j, &q) in qubits.iter().enumerate() {
                match (code >> (2 * j)) & 3 {
                    1 => x |= 1 << q,
                    2 => {
                        x |= 1 << q;
                        z |= 1 << q;
                    }
                    3 => z |= 1 << q,
                    _ => {}
                }
            }
            seen.insert((x, z));
        }
    }
    if !opts.include_identity {
        seen.remove(&(0, 0));
    }
    let mut out: Vec<PauliString> =
        seen.into_iter().map(|(x, z)| PauliString::hermitian_from_masks(n, x, z)).collect();
    out.sort_by_cached_key(|p| p.order_key());
    out
}

/// Upper bound `m·𝔡^ℓ·10^{kℓ}` on the size of the level-`ell` perturber set.
///
/// With `𝔡 = 0` the formula would give zero, so the degree is floored at one.
pub fn pkl_size_bound(model: &HamiltonianModel, ell: usize) -> f64 {
    let d = build_dual_graph(model).degree().max(1) as f64;
    let k = model.locality() as f64;
    model.m() as f64 * d.powi(ell as i32) * 10f64.powf(k * ell as f64)
}

/// Hierarchy level for which the convergence guarantee is stated: `max(3, 1+(𝔡+1)²)`.
pub fn suggest_level(g: &DualInteractionGraph) -> usize {
    let d = g.degree();
    3.max(1 + (d + 1) * (d + 1))
}

/// Whether `p` is supported inside one admissible union at level `ell`.
pub fn is_admissible(model: &HamiltonianModel, ell: usize, p: &PauliString) -> bool {
    admissible_unions(model, ell).iter().any(|&u| p.support_mask() & !u == 0)
}
