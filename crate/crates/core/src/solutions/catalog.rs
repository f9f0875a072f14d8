//! Closed-form fields with exact derivatives, the certified solution
//! catalog built from them, and the symmetry transforms acting on both.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field_model::{el_residual, FieldJet, SecondDerivatives, StiefelFrame};
use crate::linalg::{self, ComplexMatrix, I};
use crate::solutions::grid::{GridField, JetField, LightConeGrid, Provenance};

/// Tolerance on the EL residual (and the constraint defects) for admission.
pub const CERTIFICATION_TOLERANCE: f64 = 1e-10;

/// Nodes per direction of the certification sample on `[-1, 1]²`.
pub const CERTIFICATION_NODES: usize = 17;

type JetFn = dyn Fn(f64, f64) -> FieldJet + Send + Sync;
type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;
type CurveFn = dyn Fn(f64) -> ComplexMatrix + Send + Sync;

/// A field given in closed form together with its exact derivatives.
/// Nothing guarantees it solves the field equation; see [`AnalyticSolution`].
#[derive(Clone)]
pub struct ClosedFormField {
    name: String,
    n: usize,
    m: usize,
    eval: Arc<JetFn>,
}

impl fmt::Debug for ClosedFormField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedFormField").field("name", &self.name).field("n", &self.n).field("m", &self.m).finish()
    }
}

impl ClosedFormField {
    pub fn from_fn(name: impl Into<String>, n: usize, m: usize, eval: impl Fn(f64, f64) -> FieldJet + Send + Sync + 'static) -> Self {
        ClosedFormField { name: name.into(), n, m, eval: Arc::new(eval) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn jet(&self, xi_l: f64, xi_r: f64) -> FieldJet {
        (self.eval)(xi_l, xi_r)
    }

    pub fn sample(&self, grid: &LightConeGrid) -> JetField {
        let jets = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let (l, r) = grid.coords(k);
                self.jet(l, r)
            })
            .collect();
        JetField::from_exact(*grid, jets)
    }

    pub fn grid_field(&self, grid: &LightConeGrid) -> Result<GridField> {
        let frames = (0..grid.len()).map(|k| {
            let (l, r) = grid.coords(k);
            self.jet(l, r).frame().clone()
        });
        GridField::new(*grid, frames.collect(), Provenance::Analytic { name: self.name.clone() })
    }

    /// Largest EL residual and largest constraint defect over the grid.
    pub fn residuals(&self, grid: &LightConeGrid) -> (f64, f64) {
        self.sample(grid)
            .jets()
            .par_iter()
            .map(|jet| {
                let el = el_residual(jet).expect("closed-form jets carry second derivatives");
                let constraint = linalg::unitarity_defect(jet.x())
                    + jet.first_order_constraint_defect()
                    + jet.second_order_constraint_defect();
                (el, constraint)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
    }

    /// Admit the field as a solution after checking it on the certification
    /// sample.
    pub fn certify(self) -> Result<AnalyticSolution> {
        let grid = LightConeGrid::square(CERTIFICATION_NODES, -1.0, 1.0)?;
        let (el, constraint) = self.residuals(&grid);
        let residual = el.max(constraint);
        if !(residual <= CERTIFICATION_TOLERANCE) {
            return Err(Error::Certification { name: self.name, residual, tolerance: CERTIFICATION_TOLERANCE });
        }
        Ok(AnalyticSolution { field: self, residual: el })
    }

    /// `X ↦ X h(ξ)` with `h = exp(ξ_L A) exp(ξ_R B)` in SU(m).
    pub fn gauge_transformed(&self, gauge: &LocalGauge) -> Result<ClosedFormField> {
        if gauge.a.nrows() != self.m {
            return Err(Error::mismatch(format!("{0}x{0} gauge generators", self.m), format!("{0}x{0}", gauge.a.nrows())));
        }
        let inner = self.eval.clone();
        let (a, b) = (gauge.a.clone(), gauge.b.clone());
        Ok(ClosedFormField::from_fn(format!("{} (gauge)", self.name), self.n, self.m, move |l, r| {
            let jet = inner(l, r);
            let e1 = linalg::exp_anti_hermitian(&a.scale(l));
            let e2 = linalg::exp_anti_hermitian(&b.scale(r));
            let h = &e1 * &e2;
            let h_l = &a * &h;
            let h_r = &e1 * &b * &e2;
            let h_ll = &a * &h_l;
            let h_lr = &a * &h_r;
            let h_rr = &e1 * &b * &b * &e2;
            let s = jet.second().expect("closed-form jets carry second derivatives");
            let (x, xl, xr) = (jet.x(), jet.dl(), jet.dr());
            FieldJet::exact_unchecked(
                StiefelFrame::from_matrix_unchecked(x * &h),
                xl * &h + x * &h_l,
                xr * &h + x * &h_r,
                SecondDerivatives {
                    ll: &s.ll * &h + (xl * &h_l).scale(2.0) + x * &h_ll,
                    lr: &s.lr * &h + xl * &h_r + xr * &h_l + x * &h_lr,
                    rr: &s.rr * &h + (xr * &h_r).scale(2.0) + x * &h_rr,
                },
            )
        }))
    }

    /// `X ↦ g X` for constant g ∈ SU(N).
    pub fn globally_transformed(&self, g: &ComplexMatrix) -> Result<ClosedFormField> {
        if g.nrows() != self.n {
            return Err(Error::mismatch(format!("{0}x{0} matrix", self.n), format!("{}x{}", g.nrows(), g.ncols())));
        }
        linalg::check_unitary(g, true, 1e-10)?;
        let inner = self.eval.clone();
        let g = g.clone();
        Ok(ClosedFormField::from_fn(format!("{} (global)", self.name), self.n, self.m, move |l, r| {
            inner(l, r).left_multiply(&g)
        }))
    }

    /// `Y(ξ_L, ξ_R) = X(α(ξ_L), β(ξ_R))` with chain-rule derivatives.
    pub fn reparametrized(&self, alpha: &Reparametrization, beta: &Reparametrization) -> ClosedFormField {
        let inner = self.eval.clone();
        let (alpha, beta) = (alpha.clone(), beta.clone());
        ClosedFormField::from_fn(format!("{} (conformal)", self.name), self.n, self.m, move |l, r| {
            let jet = inner(alpha.value(l), beta.value(r));
            let s = jet.second().expect("closed-form jets carry second derivatives");
            let (da, dda) = (alpha.derivative(l), alpha.second_derivative(l));
            let (db, ddb) = (beta.derivative(r), beta.second_derivative(r));
            FieldJet::exact_unchecked(
                jet.frame().clone(),
                jet.dl().scale(da),
                jet.dr().scale(db),
                SecondDerivatives {
                    ll: jet.dl().scale(dda) + s.ll.scale(da * da),
                    lr: s.lr.scale(da * db),
                    rr: jet.dr().scale(ddb) + s.rr.scale(db * db),
                },
            )
        })
    }

    /// `Y(ξ_L, ξ_R) = X(ξ_R, ξ_L)`.
    pub fn parity(&self) -> ClosedFormField {
        let inner = self.eval.clone();
        ClosedFormField::from_fn(format!("{} (parity)", self.name), self.n, self.m, move |l, r| {
            let jet = inner(r, l);
            let s = jet.second().expect("closed-form jets carry second derivatives");
            FieldJet::exact_unchecked(
                jet.frame().clone(),
                jet.dr().clone(),
                jet.dl().clone(),
                SecondDerivatives { ll: s.rr.clone(), lr: s.lr.clone(), rr: s.ll.clone() },
            )
        })
    }
}

/// A closed-form field that passed certification.
#[derive(Clone, Debug)]
pub struct AnalyticSolution {
    field: ClosedFormField,
    residual: f64,
}

impl AnalyticSolution {
    /// Largest EL residual seen during certification.
    pub fn certified_residual(&self) -> f64 {
        self.residual
    }

    pub fn field(&self) -> &ClosedFormField {
        &self.field
    }

    pub fn into_field(self) -> ClosedFormField {
        self.field
    }
}

impl Deref for AnalyticSolution {
    type Target = ClosedFormField;

    fn deref(&self) -> &ClosedFormField {
        &self.field
    }
}

/// Local SU(m) gauge `h(ξ) = exp(ξ_L A) exp(ξ_R B)`.
#[derive(Clone, Debug)]
pub struct LocalGauge {
    a: ComplexMatrix,
    b: ComplexMatrix,
}

impl LocalGauge {
    /// Generators must be traceless anti-hermitian m×m matrices.
    pub fn new(a: ComplexMatrix, b: ComplexMatrix) -> Result<Self> {
        for g in [&a, &b] {
            if g.nrows() != a.nrows() {
                return Err(Error::mismatch(format!("{0}x{0}", a.nrows()), format!("{}x{}", g.nrows(), g.ncols())));
            }
            if a.nrows() >= 2 {
                crate::sun_algebra::AlgebraElement::new(g.clone())?;
            } else if linalg::frob(g) > 0.0 {
                return Err(Error::NotTraceless { deviation: 1.0 });
            }
        }
        Ok(LocalGauge { a, b })
    }

    pub fn random<R: rand::Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        if m < 2 {
            return LocalGauge { a: linalg::zeros(m, m), b: linalg::zeros(m, m) };
        }
        LocalGauge { a: linalg::random_anti_hermitian(m, rng), b: linalg::random_anti_hermitian(m, rng) }
    }

    pub fn at(&self, xi_l: f64, xi_r: f64) -> ComplexMatrix {
        linalg::exp_anti_hermitian(&self.a.scale(xi_l))
            * linalg::exp_anti_hermitian(&self.b.scale(xi_r))
    }
}

/// Smooth monotone change of one light-cone coordinate with its first two
/// derivatives.
#[derive(Clone)]
pub struct Reparametrization {
    f: Arc<ScalarFn>,
    df: Arc<ScalarFn>,
    ddf: Arc<ScalarFn>,
}

impl fmt::Debug for Reparametrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Reparametrization")
    }
}

impl Reparametrization {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        ddf: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Reparametrization { f: Arc::new(f), df: Arc::new(df), ddf: Arc::new(ddf) }
    }

    pub fn affine(scale: f64, shift: f64) -> Self {
        Reparametrization::new(move |x| scale * x + shift, move |_| scale, |_| 0.0)
    }

    /// `ξ ↦ ξ + c ξ³`, monotone for c ≥ 0.
    pub fn cubic(c: f64) -> Self {
        Reparametrization::new(move |x| x + c * x * x * x, move |x| 1.0 + 3.0 * c * x * x, move |x| 6.0 * c * x)
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.df)(x)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        (self.ddf)(x)
    }
}

/// The field that sits at `x0` everywhere.
pub fn constant_solution(x0: StiefelFrame) -> Result<AnalyticSolution> {
    let (n, m) = (x0.n(), x0.m());
    ClosedFormField::from_fn("constant", n, m, move |_, _| FieldJet::constant(x0.clone())).certify()
}

/// A curve in the Stiefel manifold with the derivatives a chiral wave needs.
#[derive(Clone)]
pub struct ChiralCurve {
    pub value: Arc<CurveFn>,
    pub derivative: Option<Arc<CurveFn>>,
    pub second_derivative: Option<Arc<CurveFn>>,
}

impl ChiralCurve {
    /// `f(ξ) = exp(ξ A) X0` for anti-hermitian A.
    pub fn exponential(x0: &StiefelFrame, a: &ComplexMatrix) -> Result<Self> {
        if a.nrows() != x0.n() || a.ncols() != x0.n() {
            return Err(Error::mismatch(format!("{0}x{0} generator", x0.n()), format!("{}x{}", a.nrows(), a.ncols())));
        }
        let anti = linalg::frob(&(a + a.adjoint()));
        if anti > 1e-10 * (1.0 + linalg::frob(a)) {
            return Err(Error::NotAntiHermitian { deviation: anti });
        }
        let x0 = x0.matrix().clone();
        let a = a.clone();
        let value = {
            let (a, x0) = (a.clone(), x0.clone());
            move |t: f64| linalg::exp_anti_hermitian(&a.scale(t)) * &x0
        };
        let derivative = {
            let (a, x0) = (a.clone(), x0.clone());
            move |t: f64| &a * linalg::exp_anti_hermitian(&a.scale(t)) * &x0
        };
        let second = move |t: f64| &a * &a * linalg::exp_anti_hermitian(&a.scale(t)) * &x0;
        Ok(ChiralCurve { value: Arc::new(value), derivative: Some(Arc::new(derivative)), second_derivative: Some(Arc::new(second)) })
    }
}

/// `X(ξ_L, ξ_R) = f(ξ_L)`: ∂_R P vanishes, so the field equation holds for any
/// curve.
pub fn chiral_wave(curve: ChiralCurve) -> Result<AnalyticSolution> {
    let df = curve.derivative.clone().ok_or(Error::MissingDerivatives("curve derivative"))?;
    let ddf = curve.second_derivative.clone().ok_or(Error::MissingDerivatives("curve second derivative"))?;
    let x0 = (curve.value)(0.0);
    let (n, m) = x0.shape();
    StiefelFrame::new(x0)?;
    let f = curve.value;
    ClosedFormField::from_fn("chiral_wave", n, m, move |l, _| {
        let z = linalg::zeros(n, m);
        FieldJet::exact_unchecked(
            StiefelFrame::from_matrix_unchecked(f(l)),
            df(l),
            z.clone(),
            SecondDerivatives { ll: ddf(l), lr: z.clone(), rr: z },
        )
    })
    .certify()
}

/// `X = (c₁ e^{iθ₁}, c₂ e^{iθ₂})ᵀ`, `θ_k = a_k ξ_L + b_k ξ_R`, `c₁² + c₂² = 1`.
///
/// Solves the field equation only for `c₁² = ½`.
pub fn torus(c1_squared: f64, a: [f64; 2], b: [f64; 2]) -> Result<ClosedFormField> {
    if !(0.0..=1.0).contains(&c1_squared) {
        return Err(Error::Config(format!("torus amplitude c1^2 = {c1_squared} outside [0, 1]")));
    }
    let amp = [c1_squared.sqrt(), (1.0 - c1_squared).sqrt()];
    let name = if c1_squared == 0.5 { "balanced_torus".to_string() } else { format!("torus(c1^2={c1_squared})") };
    Ok(ClosedFormField::from_fn(name, 2, 1, move |l, r| {
        let col = |f: &dyn Fn(usize) -> Complex64| ComplexMatrix::from_fn(2, 1, |k, _| f(k));
        let e = |k: usize| Complex64::from_polar(amp[k], a[k] * l + b[k] * r);
        FieldJet::exact_unchecked(
            StiefelFrame::from_matrix_unchecked(col(&e)),
            col(&|k| I * a[k] * e(k)),
            col(&|k| I * b[k] * e(k)),
            SecondDerivatives {
                ll: col(&|k| -a[k] * a[k] * e(k)),
                lr: col(&|k| -a[k] * b[k] * e(k)),
                rr: col(&|k| -b[k] * b[k] * e(k)),
            },
        )
    }))
}

pub fn balanced_torus(a1: f64, a2: f64, b1: f64, b2: f64) -> Result<AnalyticSolution> {
    torus(0.5, [a1, a2], [b1, b2])?.certify()
}

/// Negative control: the torus with unequal amplitudes, which does not solve
/// the field equation unless a or b is balanced.
pub fn unbalanced_torus(c1_squared: f64, a: [f64; 2], b: [f64; 2]) -> Result<ClosedFormField> {
    torus(c1_squared, a, b)
}

/// Block-diagonal `X = diag(X₁, X₂)` in G(m₁+m₂, n₁+n₂).
pub fn direct_sum(s1: &AnalyticSolution, s2: &AnalyticSolution) -> Result<AnalyticSolution> {
    direct_sum_fields(s1.field(), s2.field())?.certify()
}

pub fn direct_sum_fields(s1: &ClosedFormField, s2: &ClosedFormField) -> Result<ClosedFormField> {
    let (f1, f2) = (s1.eval.clone(), s2.eval.clone());
    let name = format!("direct_sum({}, {})", s1.name, s2.name);
    Ok(ClosedFormField::from_fn(name, s1.n + s2.n, s1.m + s2.m, move |l, r| {
        let (j1, j2) = (f1(l, r), f2(l, r));
        let (d1, d2) = (
            j1.second().expect("closed-form jets carry second derivatives"),
            j2.second().expect("closed-form jets carry second derivatives"),
        );
        let bd = linalg::block_diag;
        FieldJet::exact_unchecked(
            StiefelFrame::from_matrix_unchecked(bd(j1.x(), j2.x())),
            bd(j1.dl(), j2.dl()),
            bd(j1.dr(), j2.dr()),
            SecondDerivatives { ll: bd(&d1.ll, &d2.ll), lr: bd(&d1.lr, &d2.lr), rr: bd(&d1.rr, &d2.rr) },
        )
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_model::{currents, projector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_points() -> Vec<(f64, f64)> {
        vec![(0.0, 0.0), (0.3, -0.7), (-1.2, 0.4), (2.0, 1.5)]
    }

    #[test]
    fn constant_solution_has_no_currents() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = constant_solution(StiefelFrame::random(4, 2, &mut rng).unwrap()).unwrap();
        assert_eq!(s.certified_residual(), 0.0);
        for (l, r) in sample_points() {
            let j = currents(&s.jet(l, r));
            assert_eq!((j.left, j.right), (0.0, 0.0));
        }
    }

    #[test]
    fn chiral_wave_has_no_right_current() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = StiefelFrame::random(3, 1, &mut rng).unwrap();
        let a = linalg::random_anti_hermitian(3, &mut rng);
        let s = chiral_wave(ChiralCurve::exponential(&x0, &a).unwrap()).unwrap();
        for (l, r) in sample_points() {
            let j = currents(&s.jet(l, r));
            assert_eq!(j.right, 0.0);
            let j2 = currents(&s.jet(l, r + 0.5));
            assert!((j.left - j2.left).abs() < 1e-12);
        }
        let mut curve = ChiralCurve::exponential(&x0, &a).unwrap();
        curve.derivative = None;
        assert!(matches!(chiral_wave(curve), Err(Error::MissingDerivatives(_))));
    }

    #[test]
    fn chiral_wave_of_a_constant_curve_is_constant() {
        let x0 = StiefelFrame::canonical(3, 2).unwrap();
        let s = chiral_wave(ChiralCurve::exponential(&x0, &linalg::zeros(3, 3)).unwrap()).unwrap();
        let jet = s.jet(0.7, -0.2);
        assert_eq!(jet.x(), x0.matrix());
        assert_eq!(linalg::frob(jet.dl()), 0.0);
    }

    #[test]
    fn balanced_torus_currents() {
        let s = balanced_torus(1.0, -1.0, 0.0, 0.0).unwrap();
        for (l, r) in sample_points() {
            let j = currents(&s.jet(l, r));
            assert!((j.left - 1.0).abs() < 1e-12 && j.right.abs() < 1e-12);
        }
        let s = balanced_torus(0.4, -0.9, 1.7, 0.2).unwrap();
        let j = currents(&s.jet(0.2, 0.1));
        assert!((j.left - 1.3f64.powi(2) / 4.0).abs() < 1e-12);
        assert!((j.right - 1.5f64.powi(2) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn unbalanced_torus_fails_certification() {
        let f = unbalanced_torus(0.8, [1.0, 0.0], [1.0, 0.0]).unwrap();
        let grid = LightConeGrid::square(CERTIFICATION_NODES, -1.0, 1.0).unwrap();
        let (el, constraint) = f.residuals(&grid);
        assert!(el >= 1e-3);
        assert!(constraint < 1e-12);
        assert!(matches!(f.certify(), Err(Error::Certification { .. })));
    }

    #[test]
    fn direct_sum_adds_currents() {
        let t1 = balanced_torus(1.0, -1.0, 0.3, 0.0).unwrap();
        let t2 = balanced_torus(0.0, 0.5, 1.0, -1.0).unwrap();
        let s = direct_sum(&t1, &t2).unwrap();
        assert_eq!((s.n(), s.m()), (4, 2));
        for (l, r) in sample_points() {
            let (a, b, c) = (currents(&s.jet(l, r)), currents(&t1.jet(l, r)), currents(&t2.jet(l, r)));
            assert!((a.left - b.left - c.left).abs() < 1e-12);
            assert!((a.right - b.right - c.right).abs() < 1e-12);
        }
        let constant = constant_solution(StiefelFrame::canonical(2, 1).unwrap()).unwrap();
        let with_constant = direct_sum(&t1, &constant).unwrap();
        let (a, b) = (currents(&with_constant.jet(0.1, 0.2)), currents(&t1.jet(0.1, 0.2)));
        assert!((a.left - b.left).abs() < 1e-14 && (a.right - b.right).abs() < 1e-14);
    }

    #[test]
    fn transforms_preserve_solutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t1 = balanced_torus(1.0, -1.0, 0.3, 0.0).unwrap();
        let t2 = balanced_torus(0.0, 0.5, 1.0, -1.0).unwrap();
        let s = direct_sum(&t1, &t2).unwrap();
        let gauge = LocalGauge::random(2, &mut rng);
        let g = linalg::random_special_unitary(4, &mut rng);
        let fields = [
            s.gauge_transformed(&gauge).unwrap(),
            s.globally_transformed(&g).unwrap(),
            s.reparametrized(&Reparametrization::cubic(0.3), &Reparametrization::affine(2.0, 0.1)),
            s.parity(),
        ];
        for f in fields {
            f.certify().unwrap();
        }
        let gauged = s.gauge_transformed(&gauge).unwrap();
        let (p0, p1) = (projector(s.jet(0.4, 0.9).frame()), projector(gauged.jet(0.4, 0.9).frame()));
        assert!(linalg::frob(&(p0 - p1)) < 1e-12);
    }

    #[test]
    fn current_derivatives_match_differences() {
        use crate::field_model::current_derivatives;
        let wave = direct_sum_fields(&unbalanced_torus(0.8, [1.0, 0.0], [0.0, 1.0]).unwrap(), &torus(0.3, [0.5, -1.0], [0.2, 0.7]).unwrap()).unwrap();
        let d = 1e-4;
        for (l, r) in sample_points() {
            let (dr_jl, dl_jr) = current_derivatives(&wave.jet(l, r)).unwrap();
            let fd_r = (currents(&wave.jet(l, r + d)).left - currents(&wave.jet(l, r - d)).left) / (2.0 * d);
            let fd_l = (currents(&wave.jet(l + d, r)).right - currents(&wave.jet(l - d, r)).right) / (2.0 * d);
            assert!((dr_jl - fd_r).abs() < 1e-6 && (dl_jr - fd_l).abs() < 1e-6);
        }
        let plane = direct_sum(&balanced_torus(1.0, -1.0, 0.3, 0.2).unwrap(), &balanced_torus(0.4, 0.1, 1.0, -1.0).unwrap()).unwrap();
        let (a, b) = current_derivatives(&plane.jet(0.2, 0.6)).unwrap();
        assert!(a.abs() < 1e-12 && b.abs() < 1e-12);
    }
}
