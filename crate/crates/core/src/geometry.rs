//! Induced metric, fundamental forms, regularity, Gaussian curvature and
//! the mean curvature vector of the surface Z.
//!
//! The off-diagonal metric entry is `G_LR = (Z_L, Z_R) = −Re tr(∂_L X ∂_R X† P)`
//! and the first fundamental form is `I = J_L dξ_L² + 2 G_LR dξ_L dξ_R + J_R dξ_R²`.

use std::fmt::Write as _;

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_model::{currents, projector, tangent_vectors, FieldJet};
use crate::linalg::{self, commutator, frob};
use crate::solutions::{first_derivative, Axis, JetField, LightConeGrid};
use crate::sun_algebra::{element_unchecked, AlgebraElement};

/// Relative regularity threshold: regular iff `det G > 1e−10 · max(J_L J_R, 1)`.
pub const REGULARITY_FACTOR: f64 = 1e-10;

/// Induced metric at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricData {
    pub g_ll: f64,
    pub g_lr: f64,
    pub g_rr: f64,
    pub det_g: f64,
}

impl MetricData {
    pub fn new(g_ll: f64, g_lr: f64, g_rr: f64) -> Self {
        MetricData { g_ll, g_lr, g_rr, det_g: g_ll * g_rr - g_lr * g_lr }
    }

    pub fn threshold(&self) -> f64 {
        REGULARITY_FACTOR * (self.g_ll * self.g_rr).max(1.0)
    }

    pub fn is_regular(&self) -> bool {
        self.det_g > self.threshold()
    }

    pub fn require_regular(&self) -> Result<()> {
        if self.is_regular() {
            Ok(())
        } else {
            Err(Error::DegenerateMetric { det: self.det_g, threshold: self.threshold() })
        }
    }

    pub fn gram(&self) -> Matrix2<f64> {
        Matrix2::new(self.g_ll, self.g_lr, self.g_lr, self.g_rr)
    }

    /// `I(v, v)` for `v = (dξ_L, dξ_R)`.
    pub fn first_fundamental_form(&self, d_l: f64, d_r: f64) -> f64 {
        self.g_ll * d_l * d_l + 2.0 * self.g_lr * d_l * d_r + self.g_rr * d_r * d_r
    }

    /// Solve `G (x, y)ᵀ = (p, q)ᵀ`.
    fn solve(&self, p: f64, q: f64) -> (f64, f64) {
        ((self.g_rr * p - self.g_lr * q) / self.det_g, (self.g_ll * q - self.g_lr * p) / self.det_g)
    }
}

/// Metric from traces of X and its derivatives.
pub fn induced_metric(jet: &FieldJet) -> MetricData {
    let j = currents(jet);
    let p = projector(jet.frame());
    let (a, b) = (jet.dl(), jet.dr());
    let sym = (a * b.adjoint() + b * a.adjoint()).scale(0.5);
    let g_lr = -linalg::trace_product(&sym, &p).re;
    MetricData::new(j.left, g_lr, j.right)
}

/// Metric as the Gram matrix of the tangent vectors.
pub fn metric_from_tangents(zl: &AlgebraElement, zr: &AlgebraElement) -> MetricData {
    MetricData::new(zl.dot(zl), zl.dot(zr), zr.dot(zr))
}

/// Outcome of the regularity test at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub regular: bool,
    pub det_g: f64,
    pub threshold: f64,
    /// `Im tr(∂_L X ∂_R X† P)`; non-zero is sufficient for regularity.
    pub im_trace: f64,
    pub im_trace_nonzero: bool,
    /// Smallest singular value of `[vec ∂_L X, vec ∂_R X, vec X]`.
    pub independence_sigma_min: f64,
    pub independent: bool,
    pub reason: String,
}

pub fn regularity_test(jet: &FieldJet) -> RegularityReport {
    let metric = induced_metric(jet);
    let p = projector(jet.frame());
    let (a, b) = (jet.dl(), jet.dr());
    let im_trace = linalg::trace_product(&(a * b.adjoint()), &p).im;
    let scale = (metric.g_ll * metric.g_rr).sqrt().max(1.0);
    let im_trace_nonzero = im_trace.abs() > 1e-12 * scale;

    let len = jet.n() * jet.m();
    let stacked = linalg::ComplexMatrix::from_fn(len, 3, |r, c| {
        let src = [a, b, jet.x()][c];
        src[(r % jet.n(), r / jet.n())]
    });
    let independence_sigma_min = linalg::smallest_singular_value(&stacked);
    let independent = independence_sigma_min > 1e-10 * (1.0 + frob(a) + frob(b));

    let threshold = metric.threshold();
    let regular = metric.is_regular();
    let reason = if regular {
        format!("det G = {:.6e} exceeds threshold {:.1e}", metric.det_g, threshold)
    } else if metric.g_ll <= threshold || metric.g_rr <= threshold {
        format!("a tangent vanishes (J_L = {:.3e}, J_R = {:.3e})", metric.g_ll, metric.g_rr)
    } else {
        format!("tangents are parallel: det G = {:.3e} <= {:.1e}", metric.det_g, threshold)
    };
    RegularityReport { regular, det_g: metric.det_g, threshold, im_trace, im_trace_nonzero, independence_sigma_min, independent, reason }
}

/// Second derivatives of Z at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondDerivativesZ {
    pub ll: AlgebraElement,
    pub lr: AlgebraElement,
    pub rr: AlgebraElement,
}

/// `∂_L∂_L Z = [∂_L∂_L P, P]`, `∂_L∂_R Z = [∂_L P, ∂_R P]`, `∂_R∂_R Z = −[∂_R∂_R P, P]`.
pub fn second_derivatives_z(jet: &FieldJet) -> Result<SecondDerivativesZ> {
    jet.require_second()?;
    let pj = jet.projector_jet();
    let [ll, _, rr] = pj.second.as_ref().expect("second derivatives present");
    Ok(SecondDerivativesZ {
        ll: element_unchecked(commutator(ll, &pj.p)),
        lr: element_unchecked(commutator(&pj.dl, &pj.dr)),
        rr: element_unchecked(-commutator(rr, &pj.p)),
    })
}

/// Second fundamental form and mean curvature vector at a regular point.
#[derive(Clone, Debug)]
pub struct SecondFundamentalForm {
    /// Tangential coefficients: `∂_L∂_L Z = A^L_L Z_L + A^L_R Z_R + II_LL`.
    pub a_ll: f64,
    pub a_lr: f64,
    /// `∂_R∂_R Z = A^R_L Z_L + A^R_R Z_R + II_RR`.
    pub a_rl: f64,
    pub a_rr: f64,
    pub ii_ll: AlgebraElement,
    pub ii_lr: AlgebraElement,
    pub ii_rr: AlgebraElement,
    pub h: AlgebraElement,
}

impl SecondFundamentalForm {
    /// Gaussian curvature from the Gauss equation,
    /// `K det G = (II_LL, II_RR) − (II_LR, II_LR)`.
    pub fn gauss_curvature(&self, metric: &MetricData) -> f64 {
        (self.ii_ll.dot(&self.ii_rr) - self.ii_lr.dot(&self.ii_lr)) / metric.det_g
    }
}

pub fn fundamental_form_ii_and_h(jet: &FieldJet, metric: &MetricData) -> Result<SecondFundamentalForm> {
    metric.require_regular()?;
    let d = second_derivatives_z(jet)?;
    let (zl, zr) = tangent_vectors(jet);
    let (a_ll, a_lr) = metric.solve(d.ll.dot(&zl), d.ll.dot(&zr));
    let (a_rl, a_rr) = metric.solve(d.rr.dot(&zl), d.rr.dot(&zr));
    let ii_ll = &(&d.ll - &zl.scale(a_ll)) - &zr.scale(a_lr);
    let ii_rr = &(&d.rr - &zl.scale(a_rl)) - &zr.scale(a_rr);
    let ii_lr = d.lr;
    let h = (1.0 / metric.det_g)
        * &(&(&ii_ll.scale(metric.g_rr) - &ii_lr.scale(2.0 * metric.g_lr)) + &ii_rr.scale(metric.g_ll));
    Ok(SecondFundamentalForm { a_ll, a_lr, a_rl, a_rr, ii_ll, ii_lr, ii_rr, h })
}

/// Gaussian curvature from the metric alone,
/// `K = W^{-1/2} ∂_R[(∂_L G_LR − ½ G_LR ∂_L ln J_L) W^{-1/2}]`, `W = det G`,
/// using second-order differences. Nodes on the boundary or with a
/// degenerate metric anywhere in the 3×3 neighbourhood get `None`.
pub fn gaussian_curvature(grid: &LightConeGrid, metrics: &[MetricData]) -> Result<Vec<Option<f64>>> {
    grid.require_nodes(3, "curvature")?;
    let g: Vec<f64> = metrics.iter().map(|m| m.g_lr).collect();
    let jl: Vec<f64> = metrics.iter().map(|m| m.g_ll).collect();
    let dg = first_derivative(grid, &g, Axis::L)?;
    let djl = first_derivative(grid, &jl, Axis::L)?;
    let usable = |m: &MetricData| m.is_regular() && m.g_ll > REGULARITY_FACTOR;
    let inner: Vec<f64> = metrics
        .iter()
        .enumerate()
        .map(|(k, m)| if usable(m) { (dg[k] - 0.5 * m.g_lr * djl[k] / m.g_ll) / m.det_g.sqrt() } else { f64::NAN })
        .collect();
    let h_r = grid.h_r;
    Ok(grid
        .indices()
        .map(|(i, j)| {
            if !grid.is_interior(i, j, 1) {
                return None;
            }
            let stencil_ok = (i - 1..=i + 1).all(|p| (j - 1..=j + 1).all(|q| usable(&metrics[grid.index(p, q)])));
            if !stencil_ok {
                return None;
            }
            let d = (inner[grid.index(i, j + 1)] - inner[grid.index(i, j - 1)]) / (2.0 * h_r);
            Some(d / metrics[grid.index(i, j)].det_g.sqrt())
        })
        .collect())
}

/// Per-node geometry of a jet field.
#[derive(Clone, Debug)]
pub struct GeometryField {
    pub grid: LightConeGrid,
    pub metrics: Vec<MetricData>,
    /// Curvature from the metric formula.
    pub k_metric: Vec<Option<f64>>,
    /// Curvature from the Gauss equation.
    pub k_gauss: Vec<Option<f64>>,
    pub h_norm: Vec<Option<f64>>,
    /// Largest `|(∂_L∂_R Z, Z_D)|` over D at each node.
    pub mixed_tangential: Vec<f64>,
}

impl GeometryField {
    pub fn from_jets(jets: &JetField) -> Result<Self> {
        let per_node: Vec<(MetricData, Option<(f64, f64)>, f64)> = jets
            .jets()
            .par_iter()
            .map(|jet| {
                let metric = induced_metric(jet);
                let d = second_derivatives_z(jet)?;
                let (zl, zr) = tangent_vectors(jet);
                let mixed = d.lr.dot(&zl).abs().max(d.lr.dot(&zr).abs());
                let ii = if metric.is_regular() {
                    let ii = fundamental_form_ii_and_h(jet, &metric)?;
                    Some((ii.gauss_curvature(&metric), ii.h.norm()))
                } else {
                    None
                };
                Ok((metric, ii, mixed))
            })
            .collect::<Result<_>>()?;
        let metrics: Vec<MetricData> = per_node.iter().map(|p| p.0).collect();
        let k_metric = gaussian_curvature(jets.grid(), &metrics)?;
        Ok(GeometryField {
            grid: *jets.grid(),
            k_gauss: per_node.iter().map(|p| p.1.map(|x| x.0)).collect(),
            h_norm: per_node.iter().map(|p| p.1.map(|x| x.1)).collect(),
            mixed_tangential: per_node.iter().map(|p| p.2).collect(),
            metrics,
            k_metric,
        })
    }

    /// `xi_l,xi_r,J_L,J_R,G_LR,detG,K,K_gauss,H_norm,regular`; missing
    /// values are empty fields.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        let mut out = String::from("xi_l,xi_r,J_L,J_R,G_LR,detG,K,K_gauss,H_norm,regular\n");
        for (k, m) in self.metrics.iter().enumerate() {
            let (l, r) = self.grid.coords(k);
            let _ = writeln!(
                out,
                "{l:.16e},{r:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{}",
                m.g_ll,
                m.g_rr,
                m.g_lr,
                m.det_g,
                opt(self.k_metric[k]),
                opt(self.k_gauss[k]),
                opt(self.h_norm[k]),
                u8::from(m.is_regular())
            );
        }
        out
    }
}
