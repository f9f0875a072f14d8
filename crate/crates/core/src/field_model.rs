//! The Grassmannian field and the quantities built from it at one point.
//!
//! A point of G(m, n) is represented by an N×m matrix `X` with orthonormal
//! columns ([`StiefelFrame`]); a [`FieldJet`] carries `X` together with its
//! first and (optionally) second light-cone derivatives. Everything that is
//! gauge invariant goes through the projector `P = 1 − XX†`.
//!
//! The Euler–Lagrange residual used throughout is the projector form
//! `‖[∂_L∂_R P, P]‖_F`. The X-form residual is available as a diagnostic
//! ([`x_form_residual`]); the coefficient of its quadratic term is the one
//! obtained by expanding the projector form, i.e.
//! `P(∂_L∂_R X − ∂_L X X†∂_R X − ∂_R X X†∂_L X)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, commutator, frob, ComplexMatrix};
use crate::sun_algebra::{element_unchecked, AlgebraElement};

/// Admission tolerance for the Stiefel constraint `X†X = 1`.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-8;

/// Relative tolerance for the differentiated constraint on exact jets.
pub const DERIVATIVE_TOLERANCE: f64 = 1e-8;

/// N×m matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelFrame {
    mat: ComplexMatrix,
}

impl StiefelFrame {
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        let (n, m) = mat.shape();
        if m == 0 || m >= n {
            return Err(Error::InvalidDimension(format!("need 1 <= m < N, got N = {n}, m = {m}")));
        }
        if !linalg::is_finite(&mat) {
            return Err(Error::NonFinite);
        }
        let deviation = linalg::unitarity_defect(&mat);
        if deviation > CONSTRAINT_TOLERANCE {
            return Err(Error::ConstraintViolation { deviation });
        }
        Ok(StiefelFrame { mat })
    }

    /// Polar retraction `Y (Y†Y)^{-1/2}` onto the Stiefel manifold.
    pub fn retract(y: &ComplexMatrix) -> Result<Self> {
        if !linalg::is_finite(y) {
            return Err(Error::NonFinite);
        }
        let (x, sigma_min) = linalg::polar_factor(y);
        if sigma_min <= 1e-12 {
            return Err(Error::RetractionFailure { i: 0, j: 0, sigma_min });
        }
        StiefelFrame::new(x)
    }

    /// Frame spanned by the first m canonical basis vectors.
    pub fn canonical(n: usize, m: usize) -> Result<Self> {
        let mut mat = linalg::zeros(n, m);
        for k in 0..m.min(n) {
            mat[(k, k)] = Complex64::new(1.0, 0.0);
        }
        StiefelFrame::new(mat)
    }

    pub fn random<R: rand::Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Self> {
        if m == 0 || m >= n {
            return Err(Error::InvalidDimension(format!("need 1 <= m < N, got N = {n}, m = {m}")));
        }
        loop {
            let y = linalg::random_gaussian(n, m, rng);
            if let Ok(x) = StiefelFrame::retract(&y) {
                return Ok(x);
            }
        }
    }

    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    pub fn m(&self) -> usize {
        self.mat.ncols()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    pub(crate) fn from_matrix_unchecked(mat: ComplexMatrix) -> Self {
        StiefelFrame { mat }
    }
}

/// Light-cone direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    L,
    R,
}

/// Second light-cone derivatives of X.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondDerivatives {
    pub ll: ComplexMatrix,
    pub lr: ComplexMatrix,
    pub rr: ComplexMatrix,
}

/// X with its light-cone derivatives at one point.
#[derive(Clone, Debug)]
pub struct FieldJet {
    x: StiefelFrame,
    dl: ComplexMatrix,
    dr: ComplexMatrix,
    second: Option<SecondDerivatives>,
}

fn check_shape(what: &str, x: &StiefelFrame, d: &ComplexMatrix) -> Result<()> {
    if d.shape() != x.matrix().shape() {
        return Err(Error::mismatch(
            format!("{what} of shape {}x{}", x.n(), x.m()),
            format!("{}x{}", d.nrows(), d.ncols()),
        ));
    }
    if !linalg::is_finite(d) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

impl FieldJet {
    /// Jet with exact first derivatives; checks `∂X†X + X†∂X = 0`.
    pub fn new(x: StiefelFrame, dl: ComplexMatrix, dr: ComplexMatrix) -> Result<Self> {
        check_shape("dL", &x, &dl)?;
        check_shape("dR", &x, &dr)?;
        let jet = FieldJet { x, dl, dr, second: None };
        let deviation = jet.first_order_constraint_defect();
        let scale = 1.0 + frob(&jet.dl) + frob(&jet.dr);
        if deviation > DERIVATIVE_TOLERANCE * scale {
            return Err(Error::ConstraintViolation { deviation });
        }
        Ok(jet)
    }

    /// Attach exact second derivatives; checks the twice differentiated
    /// constraint.
    pub fn with_second(mut self, second: SecondDerivatives) -> Result<Self> {
        check_shape("dLL", &self.x, &second.ll)?;
        check_shape("dLR", &self.x, &second.lr)?;
        check_shape("dRR", &self.x, &second.rr)?;
        self.second = Some(second);
        let deviation = self.second_order_constraint_defect();
        let s = 1.0 + frob(&self.dl) + frob(&self.dr);
        let scale = s * s + self.second.as_ref().map_or(0.0, |d| frob(&d.ll) + frob(&d.lr) + frob(&d.rr));
        if deviation > DERIVATIVE_TOLERANCE * scale {
            return Err(Error::ConstraintViolation { deviation });
        }
        Ok(self)
    }

    /// Jet whose derivatives are approximations (finite differences).
    ///
    /// The differentiated constraints only hold to truncation order for such
    /// data, so the hermitian part of `X†∂X` (and its second-order analogue)
    /// is removed along X. The correction is of the size of the truncation
    /// error and makes every trace formula agree with its tangent-vector
    /// counterpart to rounding.
    pub fn approximate(x: StiefelFrame, dl: ComplexMatrix, dr: ComplexMatrix, second: Option<SecondDerivatives>) -> Result<Self> {
        check_shape("dL", &x, &dl)?;
        check_shape("dR", &x, &dr)?;
        if let Some(s) = &second {
            check_shape("dLL", &x, &s.ll)?;
            check_shape("dLR", &x, &s.lr)?;
            check_shape("dRR", &x, &s.rr)?;
        }
        let xm = x.matrix();
        let xh = xm.adjoint();
        let fix = |d: &ComplexMatrix, extra: ComplexMatrix| -> ComplexMatrix {
            let xd = &xh * d;
            let sym = (&xd + xd.adjoint() + extra).scale(0.5);
            d - xm * sym
        };
        let m = x.m();
        let dl = fix(&dl, linalg::zeros(m, m));
        let dr = fix(&dr, linalg::zeros(m, m));
        let second = second.map(|s| SecondDerivatives {
            ll: fix(&s.ll, (dl.adjoint() * &dl).scale(2.0)),
            lr: fix(&s.lr, dl.adjoint() * &dr + dr.adjoint() * &dl),
            rr: fix(&s.rr, (dr.adjoint() * &dr).scale(2.0)),
        });
        Ok(FieldJet { x, dl, dr, second })
    }

    /// Jet assembled from exact closed-form derivatives without re-checking.
    pub(crate) fn exact_unchecked(x: StiefelFrame, dl: ComplexMatrix, dr: ComplexMatrix, second: SecondDerivatives) -> Self {
        FieldJet { x, dl, dr, second: Some(second) }
    }

    /// Jet of a field that does not move.
    pub fn constant(x: StiefelFrame) -> Self {
        let z = linalg::zeros(x.n(), x.m());
        FieldJet {
            second: Some(SecondDerivatives { ll: z.clone(), lr: z.clone(), rr: z.clone() }),
            dl: z.clone(),
            dr: z,
            x,
        }
    }

    pub fn frame(&self) -> &StiefelFrame {
        &self.x
    }

    pub fn x(&self) -> &ComplexMatrix {
        self.x.matrix()
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }

    pub fn m(&self) -> usize {
        self.x.m()
    }

    pub fn dl(&self) -> &ComplexMatrix {
        &self.dl
    }

    pub fn dr(&self) -> &ComplexMatrix {
        &self.dr
    }

    pub fn d(&self, dir: Direction) -> &ComplexMatrix {
        match dir {
            Direction::L => &self.dl,
            Direction::R => &self.dr,
        }
    }

    pub fn second(&self) -> Option<&SecondDerivatives> {
        self.second.as_ref()
    }

    pub fn require_second(&self) -> Result<&SecondDerivatives> {
        self.second.as_ref().ok_or(Error::MissingDerivatives("second derivatives"))
    }

    /// ‖∂_L X†X + X†∂_L X‖ + ‖∂_R X†X + X†∂_R X‖.
    pub fn first_order_constraint_defect(&self) -> f64 {
        let x = self.x();
        let sym = |d: &ComplexMatrix| frob(&(d.adjoint() * x + x.adjoint() * d));
        sym(&self.dl) + sym(&self.dr)
    }

    /// Defect of the twice differentiated constraint (zero if absent).
    pub fn second_order_constraint_defect(&self) -> f64 {
        let Some(s) = &self.second else { return 0.0 };
        let x = self.x();
        let (a, b) = (&self.dl, &self.dr);
        let ll = s.ll.adjoint() * x + (a.adjoint() * a).scale(2.0) + x.adjoint() * &s.ll;
        let lr = s.lr.adjoint() * x + a.adjoint() * b + b.adjoint() * a + x.adjoint() * &s.lr;
        let rr = s.rr.adjoint() * x + (b.adjoint() * b).scale(2.0) + x.adjoint() * &s.rr;
        frob(&ll) + frob(&lr) + frob(&rr)
    }

    /// Right multiplication by a constant m×m matrix (gauge action).
    pub fn right_multiply(&self, h: &ComplexMatrix) -> FieldJet {
        FieldJet {
            x: StiefelFrame::from_matrix_unchecked(self.x() * h),
            dl: &self.dl * h,
            dr: &self.dr * h,
            second: self.second.as_ref().map(|s| SecondDerivatives { ll: &s.ll * h, lr: &s.lr * h, rr: &s.rr * h }),
        }
    }

    /// Left multiplication by a constant N×N matrix (global action).
    pub fn left_multiply(&self, g: &ComplexMatrix) -> FieldJet {
        FieldJet {
            x: StiefelFrame::from_matrix_unchecked(g * self.x()),
            dl: g * &self.dl,
            dr: g * &self.dr,
            second: self.second.as_ref().map(|s| SecondDerivatives { ll: g * &s.ll, lr: g * &s.lr, rr: g * &s.rr }),
        }
    }

    /// Projector and its derivatives at this point.
    pub fn projector_jet(&self) -> ProjectorJet {
        let x = self.x();
        let xh = x.adjoint();
        let (a, b) = (&self.dl, &self.dr);
        let (ah, bh) = (a.adjoint(), b.adjoint());
        let p = projector_matrix(x);
        let dl = -(a * &xh + x * &ah);
        let dr = -(b * &xh + x * &bh);
        let second = self.second.as_ref().map(|s| {
            let ll = -(&s.ll * &xh + (a * &ah).scale(2.0) + x * s.ll.adjoint());
            let lr = -(&s.lr * &xh + a * &bh + b * &ah + x * s.lr.adjoint());
            let rr = -(&s.rr * &xh + (b * &bh).scale(2.0) + x * s.rr.adjoint());
            [ll, lr, rr]
        });
        ProjectorJet { p, dl, dr, second }
    }
}

/// P and its light-cone derivatives.
#[derive(Clone, Debug)]
pub struct ProjectorJet {
    pub p: ComplexMatrix,
    pub dl: ComplexMatrix,
    pub dr: ComplexMatrix,
    /// `[∂_L∂_L P, ∂_L∂_R P, ∂_R∂_R P]`
    pub second: Option<[ComplexMatrix; 3]>,
}

fn projector_matrix(x: &ComplexMatrix) -> ComplexMatrix {
    linalg::identity(x.nrows()) - x * x.adjoint()
}

/// `P = 1 − XX†`.
pub fn projector(x: &StiefelFrame) -> ComplexMatrix {
    projector_matrix(x.matrix())
}

/// `D_D X = ∂_D X − XX†∂_D X = P ∂_D X`.
pub fn covariant_derivative(jet: &FieldJet, dir: Direction) -> ComplexMatrix {
    let d = jet.d(dir);
    d - jet.x() * (jet.x().adjoint() * d)
}

/// `tr{∂^μX (∂_μX)† P}` evaluated with the light-cone metric `ds² = dξ_L dξ_R`,
/// which gives `2 tr((∂_L X ∂_R X† + ∂_R X ∂_L X†) P)`.
pub fn lagrangian_density(jet: &FieldJet) -> f64 {
    let p = projector(jet.frame());
    let (a, b) = (jet.dl(), jet.dr());
    let t = linalg::trace_product(&(a * b.adjoint() + b * a.adjoint()), &p);
    2.0 * t.re
}

/// Same density from the covariant derivatives, `tr{(D_μX)† D^μX}`.
pub fn lagrangian_density_covariant(jet: &FieldJet) -> f64 {
    let dl = covariant_derivative(jet, Direction::L);
    let dr = covariant_derivative(jet, Direction::R);
    let t = linalg::trace_product(&dl.adjoint(), &dr) + linalg::trace_product(&dr.adjoint(), &dl);
    2.0 * t.re
}

/// `‖[∂_L∂_R P, P]‖_F`.
pub fn el_residual(jet: &FieldJet) -> Result<f64> {
    jet.require_second()?;
    let pj = jet.projector_jet();
    let [_, lr, _] = pj.second.as_ref().expect("second derivatives present");
    Ok(frob(&commutator(lr, &pj.p)))
}

/// `‖∂_L M_R + ∂_R M_L‖_F` with `M_D = [∂_D P, P]`; equals twice [`el_residual`].
pub fn conservation_residual(jet: &FieldJet) -> Result<f64> {
    jet.require_second()?;
    let pj = jet.projector_jet();
    let [_, lr, _] = pj.second.as_ref().expect("second derivatives present");
    let dl_mr = commutator(lr, &pj.p) + commutator(&pj.dr, &pj.dl);
    let dr_ml = commutator(lr, &pj.p) + commutator(&pj.dl, &pj.dr);
    Ok(frob(&(dl_mr + dr_ml)))
}

/// Diagnostic X-form residual `‖P(∂_L∂_R X − ∂_L X X†∂_R X − ∂_R X X†∂_L X)‖_F`.
pub fn x_form_residual(jet: &FieldJet) -> Result<f64> {
    let s = jet.require_second()?;
    let x = jet.x();
    let (a, b) = (jet.dl(), jet.dr());
    let p = projector(jet.frame());
    let inner = &s.lr - a * (x.adjoint() * b) - b * (x.adjoint() * a);
    Ok(frob(&(p * inner)))
}

/// The mixed derivative `∂_L∂_R X` that the field equation fixes, given X
/// and its first derivatives.
///
/// The P-projected part comes from the field equation; the component along
/// X comes from differentiating the constraint, with the gauge
/// (anti-hermitian) part of `X†∂_L∂_R X` set to zero.
pub fn mixed_derivative_from_field_equation(x: &ComplexMatrix, a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let xh = x.adjoint();
    let xa = &xh * a;
    let xb = &xh * b;
    let rhs = a * &xb + b * &xa;
    let projected = &rhs - x * (&xh * &rhs);
    let hermitian = -(a.adjoint() * b + b.adjoint() * a).scale(0.5);
    projected + x * hermitian
}

/// Conserved currents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Currents {
    pub left: f64,
    pub right: f64,
}

/// `J_D = tr(∂_D X ∂_D X† P)`, evaluated as `‖P ∂_D X‖²` so it is manifestly
/// non-negative.
pub fn currents(jet: &FieldJet) -> Currents {
    let l = covariant_derivative(jet, Direction::L);
    let r = covariant_derivative(jet, Direction::R);
    Currents {
        left: l.iter().map(|z| z.norm_sqr()).sum(),
        right: r.iter().map(|z| z.norm_sqr()).sum(),
    }
}

/// `(∂_R J_L, ∂_L J_R)` from the jet's mixed derivative.
pub fn current_derivatives(jet: &FieldJet) -> Result<(f64, f64)> {
    let c = &jet.require_second()?.lr;
    let pj = jet.projector_jet();
    let p = &pj.p;
    // ∂_R ‖P A‖² = 2 Re⟨P A, ∂_R P A + P C⟩
    let rate = |own: &ComplexMatrix, dp_other: &ComplexMatrix| {
        let pa = p * own;
        let d = dp_other * own + p * c;
        2.0 * pa.iter().zip(d.iter()).map(|(x, y)| (x.conj() * y).re).sum::<f64>()
    };
    Ok((rate(jet.dl(), &pj.dr), rate(jet.dr(), &pj.dl)))
}

/// `Z_L = [∂_L P, P]`, `Z_R = −[∂_R P, P]`.
pub fn tangent_vectors(jet: &FieldJet) -> (AlgebraElement, AlgebraElement) {
    let pj = jet.projector_jet();
    tangents_from_projector(&pj)
}

pub(crate) fn tangents_from_projector(pj: &ProjectorJet) -> (AlgebraElement, AlgebraElement) {
    let zl = commutator(&pj.dl, &pj.p);
    let zr = -commutator(&pj.dr, &pj.p);
    (element_unchecked(zl), element_unchecked(zr))
}

/// X ↦ X h for h ∈ SU(m).
pub fn gauge_transform(x: &StiefelFrame, h: &ComplexMatrix) -> Result<StiefelFrame> {
    if h.nrows() != x.m() || h.ncols() != x.m() {
        return Err(Error::mismatch(format!("{0}x{0}", x.m()), format!("{}x{}", h.nrows(), h.ncols())));
    }
    linalg::check_unitary(h, true, 1e-10)?;
    Ok(StiefelFrame::from_matrix_unchecked(x.matrix() * h))
}

/// X ↦ g X for g ∈ SU(N).
pub fn global_transform(g: &ComplexMatrix, x: &StiefelFrame) -> Result<StiefelFrame> {
    if g.nrows() != x.n() || g.ncols() != x.n() {
        return Err(Error::mismatch(format!("{0}x{0}", x.n()), format!("{}x{}", g.nrows(), g.ncols())));
    }
    linalg::check_unitary(g, true, 1e-10)?;
    Ok(StiefelFrame::from_matrix_unchecked(g * x.matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, I};
    use crate::sun_algebra::inner_product;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Random jet with exact derivatives of X(ξ) = exp(ξ_L A + ξ_R B) X0 at 0.
    /// It is generally not a solution.
    fn random_jet(n: usize, m: usize, seed: u64) -> FieldJet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = StiefelFrame::random(n, m, &mut rng).unwrap();
        let a = linalg::random_anti_hermitian(n, &mut rng);
        let b = linalg::random_anti_hermitian(n, &mut rng);
        let x0 = x.matrix().clone();
        let ll = &a * &a * &x0;
        let lr = (&a * &b + &b * &a).scale(0.5) * &x0;
        let rr = &b * &b * &x0;
        FieldJet::new(x, &a * &x0, &b * &x0)
            .unwrap()
            .with_second(SecondDerivatives { ll, lr, rr })
            .unwrap()
    }

    #[test]
    fn projector_examples() {
        let x = StiefelFrame::canonical(2, 1).unwrap();
        let p = projector(&x);
        assert_eq!(p[(0, 0)], c(0.0, 0.0));
        assert_eq!(p[(1, 1)], c(1.0, 0.0));

        let (alpha, beta) = (0.3_f64, -1.1_f64);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mat = nalgebra::DMatrix::from_column_slice(2, 1, &[Complex64::from_polar(s, alpha), Complex64::from_polar(s, beta)]);
        let p = projector(&StiefelFrame::new(mat).unwrap());
        let q = Complex64::from_polar(0.5, alpha - beta);
        assert!((p[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((p[(0, 1)] + q).norm() < 1e-15);
        assert!((p[(1, 0)] + q.conj()).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = StiefelFrame::random(4, 2, &mut rng).unwrap();
        let p = projector(&x);
        assert!((linalg::trace(&p) - c(2.0, 0.0)).norm() < 1e-12);
        assert!(frob(&(&p * &p - &p)) < 1e-12);
        assert!(frob(&(p * x.matrix())) < 1e-12);
    }

    #[test]
    fn stiefel_admission() {
        let bad = nalgebra::DMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.1, 0.0)]);
        assert!(matches!(StiefelFrame::new(bad.clone()), Err(Error::ConstraintViolation { .. })));
        let fixed = StiefelFrame::retract(&bad).unwrap();
        assert!(linalg::unitarity_defect(fixed.matrix()) < 1e-14);
        assert!(StiefelFrame::new(linalg::identity(2)).is_err());
        assert!(StiefelFrame::retract(&linalg::zeros(3, 1)).is_err());
    }

    #[test]
    fn covariant_derivative_is_orthogonal_to_x() {
        for seed in 0..5 {
            let jet = random_jet(4, 2, seed);
            for dir in [Direction::L, Direction::R] {
                let d = covariant_derivative(&jet, dir);
                assert!(frob(&(jet.x().adjoint() * d)) < 1e-12);
            }
        }
        let constant = FieldJet::constant(StiefelFrame::canonical(3, 1).unwrap());
        assert_eq!(frob(&covariant_derivative(&constant, Direction::L)), 0.0);
    }

    #[test]
    fn lagrangian_routes_agree() {
        for seed in 0..5 {
            let jet = random_jet(5, 2, seed);
            let a = lagrangian_density(&jet);
            let b = lagrangian_density_covariant(&jet);
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn lagrangian_vanishes_for_left_movers() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = StiefelFrame::random(3, 1, &mut rng).unwrap();
        let a = linalg::random_anti_hermitian(3, &mut rng);
        let dl = &a * x.matrix();
        let jet = FieldJet::new(x, dl, linalg::zeros(3, 1)).unwrap();
        assert!(lagrangian_density(&jet).abs() < 1e-14);
    }

    #[test]
    fn conservation_form_is_twice_the_commutator_form() {
        for seed in 0..10 {
            let jet = random_jet(4, 1 + (seed as usize % 3), seed);
            let el = el_residual(&jet).unwrap();
            let cons = conservation_residual(&jet).unwrap();
            assert!(el > 1e-6);
            assert!((cons - 2.0 * el).abs() < 1e-10 * (1.0 + el));
        }
    }

    #[test]
    fn currents_match_tangent_norms() {
        for seed in 0..10 {
            let jet = random_jet(5, 2, seed);
            let j = currents(&jet);
            let (zl, zr) = tangent_vectors(&jet);
            assert!(j.left >= 0.0 && j.right >= 0.0);
            assert!((inner_product(&zl, &zl).unwrap() - j.left).abs() < 1e-10);
            assert!((inner_product(&zr, &zr).unwrap() - j.right).abs() < 1e-10);
            assert!(AlgebraElement::new(zl.matrix().clone()).is_ok());
        }
    }

    #[test]
    fn mixed_derivative_annihilates_residual() {
        for seed in 0..10 {
            let jet = random_jet(4, 2, seed);
            let c = mixed_derivative_from_field_equation(jet.x(), jet.dl(), jet.dr());
            let s = jet.second().unwrap().clone();
            let fixed = FieldJet::approximate(jet.frame().clone(), jet.dl().clone(), jet.dr().clone(), Some(SecondDerivatives { lr: c, ..s }))
                .unwrap();
            assert!(el_residual(&fixed).unwrap() < 1e-12);
            assert!(x_form_residual(&fixed).unwrap() < 1e-12);
            // the completion respects the differentiated constraint
            assert!(fixed.second_order_constraint_defect() < 1e-10);
        }
    }

    #[test]
    fn gauge_and_global_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..5 {
            let jet = random_jet(4, 2, seed);
            let h = linalg::random_special_unitary(2, &mut rng);
            let g = linalg::random_special_unitary(4, &mut rng);
            let j0 = currents(&jet);
            let l0 = lagrangian_density(&jet);
            let e0 = el_residual(&jet).unwrap();
            for t in [jet.right_multiply(&h), jet.left_multiply(&g)] {
                let j = currents(&t);
                assert!((j.left - j0.left).abs() < 1e-12 && (j.right - j0.right).abs() < 1e-12);
                assert!((lagrangian_density(&t) - l0).abs() < 1e-12);
                assert!((el_residual(&t).unwrap() - e0).abs() < 1e-12);
            }
            let xh = gauge_transform(jet.frame(), &h).unwrap();
            assert!(frob(&(projector(&xh) - projector(jet.frame()))) < 1e-12);
        }
        let x = StiefelFrame::canonical(3, 1).unwrap();
        assert_eq!(gauge_transform(&x, &linalg::identity(1)).unwrap(), x);
        assert_eq!(global_transform(&linalg::identity(3), &x).unwrap(), x);
        let phase = linalg::identity(1) * I;
        assert!(matches!(gauge_transform(&x, &phase), Err(Error::NotSpecialUnitary { .. })));
        assert!(global_transform(&linalg::identity(3).scale(1.1), &x).is_err());
    }

    #[test]
    fn missing_second_derivatives_is_an_error() {
        let x = StiefelFrame::canonical(2, 1).unwrap();
        let jet = FieldJet::new(x, linalg::zeros(2, 1), linalg::zeros(2, 1)).unwrap();
        assert!(matches!(el_residual(&jet), Err(Error::MissingDerivatives(_))));
    }
}
