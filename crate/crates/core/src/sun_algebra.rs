//! The Lie algebra su(N) as a Euclidean space.
//!
//! Elements are anti-hermitian traceless N×N matrices with the scalar product
//! `(A, B) = -½ tr(AB)`. [`standard_basis`] returns the orthonormal basis
//! built from symmetric (`A_jk`), antisymmetric (`B_jk`) and diagonal (`C_p`)
//! generators, in this fixed order:
//!
//! ```text
//! A_12, A_13, …, A_1N, A_23, …, A_(N-1)N,
//! B_12, B_13, …, B_(N-1)N,
//! C_1, …, C_(N-1)
//! ```
//!
//! Every coordinate export in the crate uses this ordering.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, I};

/// Relative tolerance for admitting a matrix as an element of su(N).
pub const ALGEBRA_TOLERANCE: f64 = 1e-10;

/// Anti-hermitian traceless N×N matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    mat: ComplexMatrix,
}

impl AlgebraElement {
    /// Admit `mat` if it is anti-hermitian and traceless to within
    /// [`ALGEBRA_TOLERANCE`] relative to its norm. Nothing is symmetrized.
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::mismatch("square matrix", format!("{}x{}", mat.nrows(), mat.ncols())));
        }
        if mat.nrows() < 2 {
            return Err(Error::InvalidDimension(format!("su(N) needs N >= 2, got {}", mat.nrows())));
        }
        if !linalg::is_finite(&mat) {
            return Err(Error::NonFinite);
        }
        let scale = linalg::frob(&mat);
        let herm = linalg::frob(&(&mat + mat.adjoint()));
        if herm > ALGEBRA_TOLERANCE * scale {
            return Err(Error::NotAntiHermitian { deviation: herm / scale });
        }
        let tr = linalg::trace(&mat).norm();
        if tr > ALGEBRA_TOLERANCE * scale {
            return Err(Error::NotTraceless { deviation: tr / scale });
        }
        Ok(AlgebraElement { mat })
    }

    pub fn zero(n: usize) -> Self {
        AlgebraElement { mat: linalg::zeros(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    /// Euclidean norm `sqrt((a, a))`.
    pub fn norm(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }

    /// `(self, other)` without the dimension check.
    pub(crate) fn dot(&self, other: &Self) -> f64 {
        -0.5 * linalg::trace_product(&self.mat, &other.mat).re
    }

    pub fn scale(&self, s: f64) -> Self {
        AlgebraElement { mat: self.mat.scale(s) }
    }

    /// Commutator of two algebra elements stays in the algebra.
    pub fn bracket(&self, other: &Self) -> Self {
        AlgebraElement { mat: linalg::commutator(&self.mat, &other.mat) }
    }
}

impl Add for &AlgebraElement {
    type Output = AlgebraElement;
    fn add(self, rhs: Self) -> AlgebraElement {
        AlgebraElement { mat: &self.mat + &rhs.mat }
    }
}

impl Sub for &AlgebraElement {
    type Output = AlgebraElement;
    fn sub(self, rhs: Self) -> AlgebraElement {
        AlgebraElement { mat: &self.mat - &rhs.mat }
    }
}

impl Neg for &AlgebraElement {
    type Output = AlgebraElement;
    fn neg(self) -> AlgebraElement {
        AlgebraElement { mat: -&self.mat }
    }
}

impl Mul<&AlgebraElement> for f64 {
    type Output = AlgebraElement;
    fn mul(self, rhs: &AlgebraElement) -> AlgebraElement {
        rhs.scale(self)
    }
}

/// `(a, b) = -½ tr(ab)`.
pub fn inner_product(a: &AlgebraElement, b: &AlgebraElement) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::mismatch(format!("su({})", a.dim()), format!("su({})", b.dim())));
    }
    Ok(a.dot(b))
}

/// Which generator a basis element is (1-based indices).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisLabel {
    A(usize, usize),
    B(usize, usize),
    C(usize),
}

impl BasisLabel {
    /// True when the generator only couples indices on the same side of
    /// the split `{1..m} ∪ {m+1..N}`.
    pub fn is_block_diagonal(&self, m: usize) -> bool {
        match *self {
            BasisLabel::A(j, k) | BasisLabel::B(j, k) => (j <= m) == (k <= m),
            BasisLabel::C(_) => true,
        }
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisLabel::A(j, k) => write!(f, "A{j}{k}"),
            BasisLabel::B(j, k) => write!(f, "B{j}{k}"),
            BasisLabel::C(p) => write!(f, "C{p}"),
        }
    }
}

/// Orthonormal basis of su(N) in the documented order.
#[derive(Clone, Debug)]
pub struct SuNBasis {
    n: usize,
    elements: Vec<AlgebraElement>,
    labels: Vec<BasisLabel>,
}

impl SuNBasis {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[AlgebraElement] {
        &self.elements
    }

    pub fn labels(&self) -> &[BasisLabel] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BasisLabel, &AlgebraElement)> {
        self.labels.iter().zip(self.elements.iter())
    }

    /// Coordinates of `a` in ℝ^{N²−1}.
    pub fn to_coordinates(&self, a: &AlgebraElement) -> Result<Vec<f64>> {
        if a.dim() != self.n {
            return Err(Error::mismatch(format!("su({})", self.n), format!("su({})", a.dim())));
        }
        Ok(self.elements.iter().map(|e| e.dot(a)).collect())
    }

    pub fn from_coordinates(&self, coords: &[f64]) -> Result<AlgebraElement> {
        if coords.len() != self.elements.len() {
            return Err(Error::mismatch(self.elements.len(), coords.len()));
        }
        let mut mat = linalg::zeros(self.n, self.n);
        for (e, &x) in self.elements.iter().zip(coords) {
            mat += e.matrix().scale(x);
        }
        Ok(AlgebraElement { mat })
    }
}

/// The orthonormal basis `{A_jk, B_jk, C_p}` of su(n).
pub fn standard_basis(n: usize) -> Result<SuNBasis> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!("su(N) needs N >= 2, got {n}")));
    }
    let mut elements = Vec::with_capacity(n * n - 1);
    let mut labels = Vec::with_capacity(n * n - 1);
    for j in 0..n {
        for k in (j + 1)..n {
            let mut m = linalg::zeros(n, n);
            m[(j, k)] = I;
            m[(k, j)] = I;
            elements.push(AlgebraElement { mat: m });
            labels.push(BasisLabel::A(j + 1, k + 1));
        }
    }
    for j in 0..n {
        for k in (j + 1)..n {
            let mut m = linalg::zeros(n, n);
            m[(j, k)] = Complex64::new(1.0, 0.0);
            m[(k, j)] = Complex64::new(-1.0, 0.0);
            elements.push(AlgebraElement { mat: m });
            labels.push(BasisLabel::B(j + 1, k + 1));
        }
    }
    for p in 1..n {
        let norm = (2.0 / (p * (p + 1)) as f64).sqrt();
        let mut m = linalg::zeros(n, n);
        for d in 0..p {
            m[(d, d)] = I * norm;
        }
        m[(p, p)] = I * (-(p as f64) * norm);
        elements.push(AlgebraElement { mat: m });
        labels.push(BasisLabel::C(p));
    }
    Ok(SuNBasis { n, elements, labels })
}

/// `φ a φ†` for a unitary φ (adjoint action).
pub fn conjugate_by(phi: &ComplexMatrix, a: &AlgebraElement) -> Result<AlgebraElement> {
    if phi.nrows() != a.dim() || phi.ncols() != a.dim() {
        return Err(Error::mismatch(
            format!("{0}x{0}", a.dim()),
            format!("{}x{}", phi.nrows(), phi.ncols()),
        ));
    }
    linalg::check_unitary(phi, false, ALGEBRA_TOLERANCE * (a.dim() as f64).sqrt().max(1.0) * 10.0)?;
    Ok(AlgebraElement { mat: phi * a.matrix() * phi.adjoint() })
}

/// Unchecked construction for values the crate produces by algebraically
/// closed operations (commutators of hermitian matrices and the like).
pub(crate) fn element_unchecked(mat: ComplexMatrix) -> AlgebraElement {
    AlgebraElement { mat }
}
