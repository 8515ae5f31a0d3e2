//! The matrix algebra `M_d(C)` and bounded linear maps on it.
//!
//! Superoperators are stored as `d² × d²` matrices acting on column-stacked
//! vectorizations, `vec(b)[i + d*j] = b[(i, j)]`. Under this convention
//! `vec(l * b * r) = (rᵀ ⊗ l) * vec(b)`, and composition of maps is plain
//! matrix multiplication of representations.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::random;

pub type C64 = Complex64;

/// An element of `M_d(C)`.
pub type Element = DMatrix<C64>;

/// Relative eigenvalue tolerance for positive semidefiniteness checks.
pub const PSD_TOL: f64 = 1e-10;

const NORM_DIRECTIONS: usize = 500;
const NORM_SEED: u64 = 0x6e6f_726d;
const NORM_REFINED_STARTS: usize = 6;
const NORM_MAX_ASCENT: usize = 200;

pub fn identity(d: usize) -> Element {
    DMatrix::identity(d, d)
}

pub fn scalar(d: usize, z: C64) -> Element {
    DMatrix::from_diagonal_element(d, d, z)
}

pub fn matrix_unit(d: usize, i: usize, j: usize) -> Element {
    let mut e = DMatrix::zeros(d, d);
    e[(i, j)] = C64::new(1.0, 0.0);
    e
}

/// Operator (spectral) norm of a matrix.
pub fn op_norm(a: &Element) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn vectorize(b: &Element) -> DVector<C64> {
    DVector::from_column_slice(b.as_slice())
}

pub fn unvectorize(v: &DVector<C64>, d: usize) -> Element {
    DMatrix::from_column_slice(d, d, v.as_slice())
}

/// Matrix exponential.
pub fn expm(a: &Element) -> Element {
    a.exp()
}

pub fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

pub fn is_finite(m: &DMatrix<C64>) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Eigen-decomposition of the hermitian part of `m`, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn vector(&self, k: usize) -> DVector<C64> {
        self.vectors.column(k).into_owned()
    }
}

pub fn hermitian_spectrum(m: &DMatrix<C64>) -> Spectrum {
    let n = m.nrows();
    if n == 0 {
        return Spectrum { values: Vec::new(), vectors: DMatrix::zeros(0, 0) };
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Spectrum { values, vectors }
}

/// PSD verdict with threshold `-tol * max(1, ‖m‖)`.
pub fn is_psd(m: &DMatrix<C64>, tol: f64) -> bool {
    hermitian_spectrum(m).min() >= -tol * op_norm(m).max(1.0)
}

/// Unitary factor `u` of the polar decomposition `g = u |g|`.
pub fn polar_unitary(g: &Element) -> Element {
    let svd = g.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    u * v_t
}

/// Top singular triple `(σ, u, v)` with `a v = σ u`.
fn top_singular(a: &Element) -> (f64, DVector<C64>, DVector<C64>) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let k = svd.singular_values.imax();
    (
        svd.singular_values[k],
        u.column(k).into_owned(),
        v_t.row(k).adjoint(),
    )
}

/// A linear map `M_d(C) -> M_d(C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator {
    dim: usize,
    rep: DMatrix<C64>,
}

impl Superoperator {
    pub fn from_rep(dim: usize, rep: DMatrix<C64>) -> Result<Self> {
        let n = dim * dim;
        if rep.nrows() != n || rep.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rep.nrows().max(rep.ncols()) });
        }
        if !is_finite(&rep) {
            return Err(Error::NonFinite("superoperator representation"));
        }
        Ok(Superoperator { dim, rep })
    }

    /// Tabulates `f` on the matrix units.
    pub fn from_fn(dim: usize, f: impl Fn(&Element) -> Element) -> Self {
        let n = dim * dim;
        let mut rep = DMatrix::zeros(n, n);
        for j in 0..dim {
            for i in 0..dim {
                let image = f(&matrix_unit(dim, i, j));
                rep.set_column(i + dim * j, &vectorize(&image));
            }
        }
        Superoperator { dim, rep }
    }

    pub fn identity(dim: usize) -> Self {
        Superoperator { dim, rep: DMatrix::identity(dim * dim, dim * dim) }
    }

    pub fn zero(dim: usize) -> Self {
        Superoperator { dim, rep: DMatrix::zeros(dim * dim, dim * dim) }
    }

    /// `b ↦ l b r`.
    pub fn sandwich(l: &Element, r: &Element) -> Self {
        assert_eq!(l.nrows(), r.nrows(), "sandwich factors of different size");
        Superoperator { dim: l.nrows(), rep: r.transpose().kronecker(l) }
    }

    pub fn left_mul(c: &Element) -> Self {
        Self::sandwich(c, &identity(c.nrows()))
    }

    pub fn right_mul(c: &Element) -> Self {
        Self::sandwich(&identity(c.nrows()), c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rep(&self) -> &DMatrix<C64> {
        &self.rep
    }

    pub fn apply(&self, b: &Element) -> Element {
        assert_eq!(b.nrows(), self.dim, "element dimension does not match superoperator");
        unvectorize(&(&self.rep * vectorize(b)), self.dim)
    }

    /// `self ∘ inner`, i.e. `b ↦ self(inner(b))`.
    pub fn compose(&self, inner: &Superoperator) -> Result<Self> {
        if self.dim != inner.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: inner.dim });
        }
        Ok(Superoperator { dim: self.dim, rep: &self.rep * &inner.rep })
    }

    /// `e^{tG}` for `t ≥ 0`.
    pub fn exp(&self, t: f64) -> Result<Self> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        self.exp_signed(t)
    }

    /// `e^{tG}` for any real `t`; negative times only serve diagnostics
    /// such as central differences.
    pub fn exp_signed(&self, t: f64) -> Result<Self> {
        if !t.is_finite() {
            return Err(Error::NonFinite("exponential time"));
        }
        if !is_finite(&self.rep) {
            return Err(Error::NonFinite("generator"));
        }
        if t == 0.0 {
            return Ok(Self::identity(self.dim));
        }
        let rep = (&self.rep * C64::new(t, 0.0)).exp();
        if !is_finite(&rep) {
            return Err(Error::NonFinite("exponential"));
        }
        Ok(Superoperator { dim: self.dim, rep })
    }

    /// Adjoint with respect to the Hilbert–Schmidt inner product.
    pub fn hs_adjoint(&self) -> Self {
        Superoperator { dim: self.dim, rep: self.rep.adjoint() }
    }

    /// `* ∘ A ∘ *`, i.e. `b ↦ A(b*)*`.
    pub fn involuted(&self) -> Self {
        let d = self.dim;
        let swap = |k: usize| (k / d) + d * (k % d);
        let n = d * d;
        let rep = DMatrix::from_fn(n, n, |k, l| self.rep[(swap(k), swap(l))].conj());
        Superoperator { dim: d, rep }
    }

    pub fn scale(&self, z: C64) -> Self {
        Superoperator { dim: self.dim, rep: &self.rep * z }
    }

    /// Frobenius norm of the representation (the Hilbert–Schmidt-to-HS norm
    /// upper bound); cheap, used for tolerance scaling only.
    pub fn frobenius(&self) -> f64 {
        self.rep.norm()
    }

    pub fn max_abs_diff(&self, other: &Superoperator) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.rep
            .iter()
            .zip(other.rep.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Operator norm of the map on `(M_d, ‖·‖_op)`.
    ///
    /// This is the plain bounded-map norm, not the cb-norm. It is the best
    /// value among 500 seeded random directions, the identity and the top
    /// Hilbert–Schmidt singular direction, with the best few starts refined
    /// by polar ascent: `b ← polar(A†(u v*))` where `u, v` is the top
    /// singular pair of `A(b)`. Each ascent step is non-decreasing.
    pub fn norm(&self) -> f64 {
        if self.rep.iter().all(|z| *z == C64::new(0.0, 0.0)) {
            return 0.0;
        }
        let d = self.dim;
        let mut starts: Vec<Element> = Vec::with_capacity(NORM_DIRECTIONS + 2);
        starts.push(identity(d));
        let (_, _, v) = top_singular(&self.rep);
        starts.push(unvectorize(&v, d));
        let mut rng = random::rng(NORM_SEED);
        for _ in 0..NORM_DIRECTIONS {
            starts.push(random::gaussian_matrix(&mut rng, d, d));
        }
        let mut scored: Vec<(f64, Element)> = starts
            .into_iter()
            .filter_map(|b| {
                let n = op_norm(&b);
                (n > 0.0).then(|| {
                    let b = b.unscale(n);
                    (op_norm(&self.apply(&b)), b)
                })
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let adjoint = self.hs_adjoint();
        scored
            .into_iter()
            .take(NORM_REFINED_STARTS)
            .map(|(value, b)| self.ascend(&adjoint, b, value))
            .fold(0.0, f64::max)
    }

    fn ascend(&self, adjoint: &Superoperator, mut b: Element, mut best: f64) -> f64 {
        for _ in 0..NORM_MAX_ASCENT {
            let (_, u, v) = top_singular(&self.apply(&b));
            let gradient = adjoint.apply(&(&u * v.adjoint()));
            if gradient.norm() == 0.0 {
                break;
            }
            let next = polar_unitary(&gradient);
            let value = op_norm(&self.apply(&next));
            if value <= best * (1.0 + 1e-14) {
                best = best.max(value);
                break;
            }
            best = value;
            b = next;
        }
        best
    }

    /// Choi matrix `Σ_ij E_ij ⊗ A(E_ij)`; entry `(i*d + r, j*d + s)` is
    /// `A(E_ij)[(r, s)]`.
    pub fn choi(&self) -> DMatrix<C64> {
        let d = self.dim;
        DMatrix::from_fn(d * d, d * d, |row, col| {
            let (i, r) = (row / d, row % d);
            let (j, s) = (col / d, col % d);
            self.rep[(r + d * s, i + d * j)]
        })
    }

    /// Complete positivity via the Choi matrix, threshold `-tol * max(1, ‖C‖)`.
    pub fn is_completely_positive(&self, tol: f64) -> bool {
        is_psd(&self.choi(), tol)
    }
}

impl Add for &Superoperator {
    type Output = Superoperator;

    fn add(self, rhs: &Superoperator) -> Superoperator {
        assert_eq!(self.dim, rhs.dim, "adding superoperators of different dimension");
        Superoperator { dim: self.dim, rep: &self.rep + &rhs.rep }
    }
}

impl Add for Superoperator {
    type Output = Superoperator;

    fn add(self, rhs: Superoperator) -> Superoperator {
        &self + &rhs
    }
}

impl Sub for &Superoperator {
    type Output = Superoperator;

    fn sub(self, rhs: &Superoperator) -> Superoperator {
        assert_eq!(self.dim, rhs.dim, "subtracting superoperators of different dimension");
        Superoperator { dim: self.dim, rep: &self.rep - &rhs.rep }
    }
}

impl Sub for Superoperator {
    type Output = Superoperator;

    fn sub(self, rhs: Superoperator) -> Superoperator {
        &self - &rhs
    }
}

impl Neg for &Superoperator {
    type Output = Superoperator;

    fn neg(self) -> Superoperator {
        Superoperator { dim: self.dim, rep: -&self.rep }
    }
}

impl Mul<C64> for &Superoperator {
    type Output = Superoperator;

    fn mul(self, z: C64) -> Superoperator {
        self.scale(z)
    }
}
