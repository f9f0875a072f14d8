//! Dense complex matrix helpers shared by every module.
//!
//! All matrices are `nalgebra::DMatrix<Complex64>`; the dimensions involved
//! here are tiny (N up to ~16) so nothing is sparse or blocked.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Frobenius norm.
pub fn frob(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// tr(a b) without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// ‖U†U − 1‖_F
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    frob(&(u.adjoint() * u - identity(u.ncols())))
}

pub fn determinant(m: &ComplexMatrix) -> Complex64 {
    m.clone().determinant()
}

/// Check that `u` is a square unitary within `tol` (and special if asked).
pub fn check_unitary(u: &ComplexMatrix, special: bool, tol: f64) -> Result<()> {
    if !u.is_square() {
        return Err(Error::mismatch("square matrix", format!("{}x{}", u.nrows(), u.ncols())));
    }
    if !is_finite(u) {
        return Err(Error::NonFinite);
    }
    let deviation = unitarity_defect(u);
    if deviation > tol {
        return Err(Error::NotUnitary { deviation });
    }
    if special {
        let d = determinant(u);
        if (d - Complex64::new(1.0, 0.0)).norm() > tol {
            return Err(Error::NotSpecialUnitary { re: d.re, im: d.im });
        }
    }
    Ok(())
}

/// Eigen-decomposition of a hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = zeros(h.nrows(), h.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Polar factor Y (Y†Y)^{-1/2}: the closest matrix with orthonormal columns.
///
/// Returns the factor and the smallest singular value of `y`.
pub fn polar_factor(y: &ComplexMatrix) -> (ComplexMatrix, f64) {
    let gram = y.adjoint() * y;
    let (values, vectors) = hermitian_eigen(&gram);
    let sigma_min = values.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    if sigma_min <= 1e-12 || !sigma_min.is_finite() {
        return (y.clone(), sigma_min);
    }
    let mut scaled = vectors.clone();
    for (k, &lambda) in values.iter().enumerate() {
        let s = 1.0 / lambda.sqrt();
        scaled.column_mut(k).scale_mut(s);
    }
    let inv_sqrt = scaled * vectors.adjoint();
    (y * inv_sqrt, sigma_min)
}

/// exp(A) for an anti-hermitian A, computed from the eigenbasis of the
/// hermitian matrix -iA.
pub fn exp_anti_hermitian(a: &ComplexMatrix) -> ComplexMatrix {
    let h = a * (-I);
    let (values, vectors) = hermitian_eigen(&h);
    let mut scaled = vectors.clone();
    for (k, &lambda) in values.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, lambda);
        for r in 0..scaled.nrows() {
            scaled[(r, k)] *= phase;
        }
    }
    scaled * vectors.adjoint()
}

pub fn random_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) / std::f64::consts::SQRT_2
    })
}

/// Random anti-hermitian traceless matrix with Gaussian entries.
pub fn random_anti_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let g = random_gaussian(n, n, rng);
    let mut a = (&g - g.adjoint()).scale(0.5);
    let t = trace(&a) / n as f64;
    for k in 0..n {
        a[(k, k)] -= t;
    }
    a
}

/// Haar-ish random unitary (polar factor of a Gaussian matrix).
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    loop {
        let (u, sigma) = polar_factor(&random_gaussian(n, n, rng));
        if sigma > 1e-6 {
            return u;
        }
    }
}

/// Random element of SU(n).
pub fn random_special_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let u = random_unitary(n, rng);
    let d = determinant(&u);
    let fix = Complex64::from_polar(1.0, -d.arg() / n as f64);
    u * fix
}

/// Smallest singular value of a (tall) complex matrix.
pub fn smallest_singular_value(m: &ComplexMatrix) -> f64 {
    let gram = m.adjoint() * m;
    let (values, _) = hermitian_eigen(&gram);
    values.first().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Block-diagonal matrix diag(a, b).
pub fn block_diag(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let mut out = zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}
