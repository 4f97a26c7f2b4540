//! Dense complex helpers shared by the numeric modules.
//!
//! Every matrix function of a Hermitian argument goes through a single
//! eigendecomposition so that square roots, inverse square roots and
//! logarithms of the same matrix stay mutually consistent.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// `(a + a†) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// `(a - a†) / 2`.
pub fn antihermitian_part(a: &CMat) -> CMat {
    (a - a.adjoint()).scale(0.5)
}

/// Hermitian eigendecomposition with eigenvalues in ascending order.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: DVector<f64>,
    pub vectors: CMat,
}

impl Eigh {
    pub fn new(a: &CMat) -> Self {
        let eig = hermitian_part(a).symmetric_eigen();
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = CMat::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Self { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `U f(Λ) U†`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        cmatmul(&scaled, &self.vectors.adjoint())
    }
}

pub fn eigvalsh(a: &CMat) -> DVector<f64> {
    hermitian_part(a).symmetric_eigenvalues()
}

pub fn min_eigenvalue(a: &CMat) -> f64 {
    eigvalsh(a).iter().copied().fold(f64::INFINITY, f64::min)
}

/// Largest singular value.
pub fn spectral_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = cmatmul(&a.adjoint(), a);
    eigvalsh(&gram)
        .iter()
        .copied()
        .fold(0.0_f64, f64::max)
        .max(0.0)
        .sqrt()
}

/// Spectral norm of a matrix known to be Hermitian.
pub fn hermitian_norm(a: &CMat) -> f64 {
    eigvalsh(a).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_entry(a: &CMat) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.norm()))
}

/// Complex product routed through four real products, which use the
/// optimized real gemm kernel.
pub fn cmatmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "cmatmul: inner dimensions differ");
    if a.nrows() * a.ncols() * b.ncols() < 4096 {
        return a * b;
    }
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    CMat::from_fn(a.nrows(), b.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
}

fn split(a: &CMat) -> (DMatrix<f64>, DMatrix<f64>) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

/// `Re tr(a b)`; equals the Frobenius inner product when both are Hermitian.
pub fn trace_product(a: &CMat, b: &CMat) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn conj(a: &CMat) -> CMat {
    a.map(|z| z.conj())
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
