//! Exact n-qubit Pauli strings in symplectic form.
//!
//! A [`PauliString`] with masks `x`, `z` and phase `p` denotes the operator
//! `i^p · X^{x_0} Z^{z_0} ⊗ X^{x_1} Z^{z_1} ⊗ …`. Bit `q` of each mask refers
//! to qubit `q`, which is the leftmost tensor factor for `q = 0` and the
//! leftmost character of the text form. Since `Y = i·XZ`, the letter string
//! `"Y"` parses to `x = z = 1` with phase 1.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::CMat;

pub const MAX_QUBITS: usize = 64;
pub const DEFAULT_DENSE_CAP: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: u64,
    z: u64,
    phase: u8,
}

/// `i^p` as a complex number.
pub fn phase_value(p: u8) -> Complex64 {
    match p & 3 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

fn mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl PauliString {
    pub fn new(n: usize, x: u64, z: u64, phase: u8) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::Invalid(format!("qubit count {n} outside 1..={MAX_QUBITS}")));
        }
        if (x | z) & !mask(n) != 0 {
            return Err(Error::Invalid(format!("masks wider than {n} qubits")));
        }
        Ok(Self { n, x, z, phase: phase & 3 })
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0 && n <= MAX_QUBITS);
        Self { n, x: 0, z: 0, phase: 0 }
    }

    /// Single-qubit Hermitian Pauli `letter` acting on `qubit`.
    pub fn single(n: usize, qubit: usize, letter: char) -> Result<Self> {
        if qubit >= n {
            return Err(Error::DimensionMismatch { expected: n, found: qubit + 1 });
        }
        let mut s = vec!['I'; n];
        s[qubit] = letter;
        s.into_iter().collect::<String>().parse()
    }

    /// Hermitian Pauli with the given letters on the given qubits.
    pub fn from_sparse(n: usize, ops: &[(usize, char)]) -> Result<Self> {
        let mut s = vec!['I'; n];
        for &(q, c) in ops {
            if q >= n {
                return Err(Error::DimensionMismatch { expected: n, found: q + 1 });
            }
            s[q] = c;
        }
        s.into_iter().collect::<String>().parse()
    }

    /// Hermitian Pauli with given masks (letter coefficient +1).
    pub fn hermitian_from_masks(n: usize, x: u64, z: u64) -> Self {
        let phase = ((x & z).count_ones() & 3) as u8;
        Self { n, x, z, phase }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    pub fn phase(&self) -> u8 {
        self.phase
    }

    /// Number of Y letters.
    fn y_count(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    /// Exponent `q` such that the operator is `i^q` times the tensor product
    /// of its letters.
    pub fn letter_phase(&self) -> u8 {
        ((self.phase as u32 + 4 - (self.y_count() & 3)) & 3) as u8
    }

    /// Scalar in front of the letter product.
    pub fn coefficient(&self) -> Complex64 {
        phase_value(self.letter_phase())
    }

    pub fn is_hermitian(&self) -> bool {
        (self.phase as u32 + self.y_count()) % 2 == 0
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    /// Same letters with coefficient +1.
    pub fn canonical(&self) -> Self {
        Self::hermitian_from_masks(self.n, self.x, self.z)
    }

    pub fn with_phase(&self, phase: u8) -> Self {
        Self { phase: phase & 3, ..*self }
    }

    pub fn adjoint(&self) -> Self {
        let p = (4 - self.phase as u32 + 2 * self.y_count()) & 3;
        Self { phase: p as u8, ..*self }
    }

    pub fn weight(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    pub fn support_mask(&self) -> u64 {
        self.x | self.z
    }

    /// Qubits acted on non-trivially, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| (self.support_mask() >> q) & 1 == 1).collect()
    }

    pub fn letter(&self, qubit: usize) -> char {
        match ((self.x >> qubit) & 1, (self.z >> qubit) & 1) {
            (0, 0) => 'I',
            (1, 0) => 'X',
            (1, 1) => 'Y',
            _ => 'Z',
        }
    }

    pub fn letters(&self) -> String {
        (0..self.n).map(|q| self.letter(q)).collect()
    }

    pub fn multiply(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: other.n });
        }
        // X^a Z^b X^c Z^d = (-1)^{b·c} X^{a+c} Z^{b+d}
        let sign = 2 * (self.z & other.x).count_ones();
        let phase = ((self.phase as u32 + other.phase as u32 + sign) & 3) as u8;
        Ok(Self { n: self.n, x: self.x ^ other.x, z: self.z ^ other.z, phase })
    }

    pub fn commutes(&self, other: &Self) -> Result<bool> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: other.n });
        }
        Ok(self.commutes_unchecked(other))
    }

    pub(crate) fn commutes_unchecked(&self, other: &Self) -> bool {
        ((self.x & other.z).count_ones() + (other.x & self.z).count_ones()) % 2 == 0
    }

    /// Mask in the dense basis, where qubit 0 is the most significant bit.
    fn dense_mask(&self, m: u64) -> usize {
        let mut out = 0usize;
        for q in 0..self.n {
            if (m >> q) & 1 == 1 {
                out |= 1 << (self.n - 1 - q);
            }
        }
        out
    }

    /// Column-wise action: `P|b⟩ = value · |row⟩`.
    pub(crate) fn dense_action(&self) -> impl Fn(usize) -> (usize, Complex64) {
        let xb = self.dense_mask(self.x);
        let zb = self.dense_mask(self.z);
        let base = phase_value(self.phase);
        move |b: usize| {
            let v = if (zb & b).count_ones() % 2 == 1 { -base } else { base };
            (b ^ xb, v)
        }
    }

    pub fn to_dense(&self) -> Result<CMat> {
        self.to_dense_capped(DEFAULT_DENSE_CAP)
    }

    pub fn to_dense_capped(&self, cap: usize) -> Result<CMat> {
        if self.n > cap {
            return Err(Error::CapExceeded { n: self.n, cap });
        }
        let d = 1usize << self.n;
        let mut m = CMat::zeros(d, d);
        let act = self.dense_action();
        for b in 0..d {
            let (row, v) = act(b);
            m[(row, b)] = v;
        }
        Ok(m)
    }

    /// `Tr(a · P)` for a dense `a` of matching dimension.
    pub fn trace_with(&self, a: &CMat) -> Complex64 {
        let act = self.dense_action();
        let mut acc = Complex64::new(0.0, 0.0);
        for b in 0..a.ncols() {
            let (row, v) = act(b);
            acc += a[(b, row)] * v;
        }
        acc
    }

    /// `P · a` for a dense `a`.
    pub fn left_mul_dense(&self, a: &CMat) -> CMat {
        let act = self.dense_action();
        let mut out = CMat::zeros(a.nrows(), a.ncols());
        for b in 0..a.nrows() {
            let (row, v) = act(b);
            for c in 0..a.ncols() {
                out[(row, c)] = v * a[(b, c)];
            }
        }
        out
    }

    /// `a · P` for a dense `a`.
    pub fn right_mul_dense(&self, a: &CMat) -> CMat {
        let act = self.dense_action();
        let mut out = CMat::zeros(a.nrows(), a.ncols());
        for b in 0..a.ncols() {
            let (row, v) = act(b);
            for r in 0..a.nrows() {
                out[(r, b)] = a[(r, row)] * v;
            }
        }
        out
    }

    /// Key of the canonical ordering: sorted support, then letters.
    pub fn order_key(&self) -> (Vec<usize>, String) {
        (self.support(), self.letters())
    }

    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.order_key().cmp(&other.order_key())
    }
}

/// All `4^n` Hermitian Paulis in canonical order (identity first).
pub fn all_paulis(n: usize) -> Vec<PauliString> {
    assert!(n <= 16, "all_paulis: n = {n} too large to enumerate");
    let mut out = Vec::with_capacity(1 << (2 * n));
    for x in 0..(1u64 << n) {
        for z in 0..(1u64 << n) {
            out.push(PauliString::hermitian_from_masks(n, x, z));
        }
    }
    out.sort_by_cached_key(|p| p.order_key());
    out
}

/// Coefficients of `a` in the Hermitian Pauli basis: `a = Σ c_k P_k`.
pub fn pauli_coefficients(a: &CMat, basis: &[PauliString]) -> Vec<Complex64> {
    let d = a.nrows() as f64;
    basis.iter().map(|p| p.trace_with(a) / d).collect()
}

impl Mul for &PauliString {
    type Output = PauliString;

    fn mul(self, rhs: &PauliString) -> PauliString {
        self.multiply(rhs).expect("Pauli product of different qubit counts")
    }
}

impl Mul for PauliString {
    type Output = PauliString;

    fn mul(self, rhs: PauliString) -> PauliString {
        &self * &rhs
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n = s.chars().count();
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::PauliParse(s.to_string()));
        }
        let (mut x, mut z) = (0u64, 0u64);
        for (q, c) in s.chars().enumerate() {
            match c {
                'I' => {}
                'X' => x |= 1 << q,
                'Y' => {
                    x |= 1 << q;
                    z |= 1 << q;
                }
                'Z' => z |= 1 << q,
                _ => return Err(Error::PauliParse(s.to_string())),
            }
        }
        Ok(Self::hermitian_from_masks(n, x, z))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.letter_phase() {
            0 => "",
            1 => "i",
            2 => "-",
            _ => "-i",
        };
        write!(f, "{prefix}{}", self.letters())
    }
}

impl Serialize for PauliString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let (lp, body) = if let Some(rest) = s.strip_prefix("-i") {
            (3, rest)
        } else if let Some(rest) = s.strip_prefix('-') {
            (2, rest)
        } else if let Some(rest) = s.strip_prefix('i') {
            (1, rest)
        } else {
            (0, s.as_str())
        };
        let p: PauliString = body.parse().map_err(serde::de::Error::custom)?;
        Ok(p.with_phase(((p.phase() as u32 + lp) & 3) as u8))
    }
}
