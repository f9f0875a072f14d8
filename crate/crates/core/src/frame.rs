//! Moving frames on the surface: the SU(N) completion Φ of X, the normal
//! basis, the Gauss–Weingarten coefficient matrices U, V and the residual of
//! their compatibility condition `∂_R U − ∂_L V + [U, V] = 0`.
//!
//! The frame is ordered `(Z_L, Z_R, n_1, …, n_{N²−3})` and satisfies
//! `∂_L F = U F`, `∂_R F = V F`.
//!
//! Two normal bases are available ([`FrameKind`]):
//! * `Conjugated`: orthonormalise the Φ-conjugated off-diagonal basis
//!   elements against the tangents, then append the Φ-conjugated
//!   block-diagonal ones. These normals follow P and rotate with it.
//! * `Ambient`: orthonormalise the fixed standard basis against the
//!   tangents. On a surface with a constant tangent plane these normals are
//!   constant.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_model::{projector, tangent_vectors, FieldJet, StiefelFrame};
use crate::geometry::{metric_from_tangents, second_derivatives_z, MetricData};
use crate::linalg::{self, frob, ComplexMatrix, I};
use crate::solutions::{first_derivative_stencil, matrix_to_pairs, neighbour, Axis, ClosedFormField, JetField, LightConeGrid};
use crate::sun_algebra::{element_unchecked, standard_basis, AlgebraElement, BasisLabel};

/// Largest relative norm of the diagonal blocks of `Φ† Z_D Φ`.
pub const BLOCK_TOLERANCE: f64 = 1e-9;

/// Gram–Schmidt fails once every remaining candidate has a smaller residual.
pub const DISCARD_THRESHOLD: f64 = 1e-8;

/// A normal sweep takes the first candidate whose residual is at least this
/// fraction of the largest remaining one.
pub const NORMAL_PIVOT_RATIO: f64 = 0.5;

/// Neighbouring normals with a smaller overlap count as an orientation flip.
pub const FLIP_THRESHOLD: f64 = 0.5;

/// Seed columns for completing X to a unitary matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompletionSeed {
    /// The canonical basis vectors e_1, …, e_N.
    Canonical,
    /// Columns of a fixed random unitary matrix drawn from `seed`.
    Rotated { seed: u64 },
}

impl CompletionSeed {
    fn candidates(&self, n: usize) -> ComplexMatrix {
        match self {
            CompletionSeed::Canonical => linalg::identity(n),
            CompletionSeed::Rotated { seed } => linalg::random_unitary(n, &mut ChaCha8Rng::seed_from_u64(*seed)),
        }
    }
}

/// Φ ∈ SU(N) whose first m columns are X.
#[derive(Clone, Debug)]
pub struct Completion {
    pub phi: ComplexMatrix,
    /// Seed columns in the order they were used.
    pub pivots: Vec<usize>,
    /// Smallest residual norm of an accepted seed column.
    pub min_residual: f64,
}

/// Completion with the canonical seed.
pub fn complete_to_group(x0: &StiefelFrame) -> ComplexMatrix {
    complete_with_seed(x0, CompletionSeed::Canonical).phi
}

/// Gram–Schmidt the seed columns against X. At every step the first
/// remaining column whose residual is at least half the largest one is
/// taken, so the choice only changes where residuals cross that ratio. The
/// last column is then rescaled to make det Φ = 1.
pub fn complete_with_seed(x0: &StiefelFrame, seed: CompletionSeed) -> Completion {
    let (n, m) = (x0.n(), x0.m());
    let cand = seed.candidates(n);
    let mut cols: Vec<DVector<Complex64>> = (0..m).map(|k| x0.matrix().column(k).into_owned()).collect();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut pivots = Vec::with_capacity(n - m);
    let mut min_residual = f64::INFINITY;
    let project_out = |v: &DVector<Complex64>, cols: &[DVector<Complex64>]| {
        let mut r = v.clone();
        for _ in 0..2 {
            for q in cols {
                let c = q.dotc(&r);
                r -= q * c;
            }
        }
        r
    };
    while cols.len() < n {
        let residuals: Vec<(usize, DVector<Complex64>)> =
            remaining.iter().map(|&k| (k, project_out(&cand.column(k).into_owned(), &cols))).collect();
        let max = residuals.iter().map(|(_, r)| r.norm()).fold(0.0, f64::max);
        let (pos, (k, r)) = residuals
            .into_iter()
            .enumerate()
            .find(|(_, (_, r))| r.norm() >= 0.5 * max)
            .expect("some residual attains the maximum");
        let norm = r.norm();
        min_residual = min_residual.min(norm);
        cols.push(r.unscale(norm));
        pivots.push(k);
        remaining.remove(pos);
    }
    let mut phi = ComplexMatrix::from_columns(&cols);
    let det = linalg::determinant(&phi);
    let fix = det.conj() / det.norm();
    for r in 0..n {
        phi[(r, n - 1)] *= fix;
    }
    Completion { phi, pivots, min_residual }
}

/// `Φ† Z_D Φ` for both tangents, checking that the m×m and n×n diagonal
/// blocks vanish.
pub fn conjugated_tangents(phi: &ComplexMatrix, m: usize, zl: &AlgebraElement, zr: &AlgebraElement) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let n = zl.dim();
    if phi.nrows() != n || phi.ncols() != n || zr.dim() != n {
        return Err(Error::mismatch(format!("{n}x{n} completion"), format!("{}x{}", phi.nrows(), phi.ncols())));
    }
    if m == 0 || m >= n {
        return Err(Error::InvalidDimension(format!("need 1 <= m < N, got N = {n}, m = {m}")));
    }
    let conj = |z: &AlgebraElement| -> Result<ComplexMatrix> {
        let t = phi.adjoint() * z.matrix() * phi;
        let diag = frob(&t.view((0, 0), (m, m)).into_owned()) + frob(&t.view((m, m), (n - m, n - m)).into_owned());
        let scale = frob(z.matrix());
        if diag > BLOCK_TOLERANCE * scale {
            return Err(Error::BlockStructure { deviation: diag / scale });
        }
        Ok(t)
    };
    Ok((conj(zl)?, conj(zr)?))
}

/// Unit element proportional to `i((N−m)·1 − N·P)`; it commutes with P, so
/// it is normal to both tangents.
pub fn projector_normal(x: &StiefelFrame) -> AlgebraElement {
    let (n, m) = (x.n() as f64, x.m() as f64);
    let mut mat = projector(x).scale(-n);
    for k in 0..x.n() {
        mat[(k, k)] += Complex64::new(n - m, 0.0);
    }
    let coefficient = (2.0 / (n * m * (n - m))).sqrt();
    element_unchecked(mat * (I * coefficient))
}

/// Where a normal came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormalSource {
    /// Orthonormalised Φ-conjugate of an off-diagonal basis element.
    OffDiagonal { label: BasisLabel },
    /// Φ-conjugate of a block-diagonal basis element.
    DiagonalBlock { label: BasisLabel },
    /// The combination of 1 and P.
    Projector,
    /// Orthonormalised fixed basis element.
    Ambient { label: BasisLabel },
}

/// How to choose the normal basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameKind {
    Conjugated {
        seed: CompletionSeed,
        /// Put the projector normal first among the block-diagonal normals.
        #[serde(default)]
        projector_normal: bool,
    },
    Ambient,
}

impl Default for FrameKind {
    fn default() -> Self {
        FrameKind::Conjugated { seed: CompletionSeed::Canonical, projector_normal: false }
    }
}

/// Tangents and an orthonormal normal basis at one point.
#[derive(Clone, Debug)]
pub struct FrameBundle {
    pub phi: Option<ComplexMatrix>,
    pub zl: AlgebraElement,
    pub zr: AlgebraElement,
    pub normals: Vec<AlgebraElement>,
    pub sources: Vec<NormalSource>,
    /// Completion pivots followed by the indices of accepted candidates;
    /// frames at neighbouring points are comparable only if these agree.
    pub pattern: Vec<usize>,
}

/// Modified Gram–Schmidt with one reorthogonalisation pass.
fn orthogonalize(v: &AlgebraElement, against: &[AlgebraElement]) -> AlgebraElement {
    let mut r = v.clone();
    for _ in 0..2 {
        for e in against {
            let c = r.dot(e);
            r = &r - &e.scale(c);
        }
    }
    r
}

fn tangent_basis(zl: &AlgebraElement, zr: &AlgebraElement, metric: &MetricData) -> Result<Vec<AlgebraElement>> {
    metric.require_regular()?;
    let e1 = zl.scale(1.0 / zl.norm());
    let r = orthogonalize(zr, std::slice::from_ref(&e1));
    let norm = r.norm();
    if !(norm > 0.0) {
        return Err(Error::DegenerateMetric { det: metric.det_g, threshold: metric.threshold() });
    }
    Ok(vec![e1, r.scale(1.0 / norm)])
}

/// Normals with their sources and the accepted-candidate pattern.
pub type NormalSet = (Vec<AlgebraElement>, Vec<NormalSource>, Vec<usize>);

/// Orthonormalise `candidates` against `span` until `target` are kept. Each
/// step takes the first remaining candidate whose residual reaches
/// [`NORMAL_PIVOT_RATIO`] times the largest one, so no normal comes from a
/// nearly dependent candidate.
fn sweep<'a>(
    span: &mut Vec<AlgebraElement>,
    candidates: impl Iterator<Item = (usize, &'a BasisLabel, AlgebraElement)>,
    target: usize,
    source: impl Fn(BasisLabel) -> NormalSource,
    out: &mut NormalSet,
) -> Result<()> {
    // residuals are kept orthogonal to the span and updated as it grows
    let mut remaining: Vec<(usize, BasisLabel, AlgebraElement)> =
        candidates.map(|(k, l, c)| (k, *l, orthogonalize(&c, span))).collect();
    for kept in 0..target {
        let max = remaining.iter().map(|(_, _, r)| r.norm()).fold(0.0, f64::max);
        if max < DISCARD_THRESHOLD {
            return Err(Error::GramSchmidt { expected: target, found: kept });
        }
        let pos = remaining.iter().position(|(_, _, r)| r.norm() >= NORMAL_PIVOT_RATIO * max).expect("some residual attains the maximum");
        let (k, label, r) = remaining.remove(pos);
        let r = orthogonalize(&r, span);
        let e = r.scale(1.0 / r.norm());
        for (_, _, other) in &mut remaining {
            *other = orthogonalize(other, std::slice::from_ref(&e));
        }
        span.push(e.clone());
        out.0.push(e);
        out.1.push(source(label));
        out.2.push(k);
    }
    Ok(())
}

/// The N²−3 normals of the conjugated frame: 2mn−2 from the off-diagonal
/// sweep, then m²+n²−1 block-diagonal ones (led by the projector normal if
/// given).
pub fn build_normals(phi: &ComplexMatrix, m: usize, zl: &AlgebraElement, zr: &AlgebraElement, metric: &MetricData) -> Result<NormalSet> {
    build_normals_with(phi, m, zl, zr, metric, None)
}

fn build_normals_with(
    phi: &ComplexMatrix,
    m: usize,
    zl: &AlgebraElement,
    zr: &AlgebraElement,
    metric: &MetricData,
    lead: Option<AlgebraElement>,
) -> Result<NormalSet> {
    let n = zl.dim();
    let basis = standard_basis(n)?;
    let mut span = tangent_basis(zl, zr, metric)?;
    let mut out: NormalSet = (Vec::new(), Vec::new(), Vec::new());
    let conj = |b: &AlgebraElement| element_unchecked(phi * b.matrix() * phi.adjoint());
    let off = basis.iter().enumerate().filter(|(_, (l, _))| !l.is_block_diagonal(m)).map(|(k, (l, b))| (k, l, conj(b)));
    sweep(&mut span, off, 2 * m * (n - m) - 2, |label| NormalSource::OffDiagonal { label }, &mut out)?;
    let mut diagonal_target = m * m + (n - m) * (n - m) - 1;
    if let Some(np) = lead {
        let r = orthogonalize(&np, &span);
        let e = r.scale(1.0 / r.norm());
        span.push(e.clone());
        out.0.push(e);
        out.1.push(NormalSource::Projector);
        out.2.push(usize::MAX);
        diagonal_target -= 1;
    }
    let diag = basis.iter().enumerate().filter(|(_, (l, _))| l.is_block_diagonal(m)).map(|(k, (l, b))| (k, l, conj(b)));
    sweep(&mut span, diag, diagonal_target, |label| NormalSource::DiagonalBlock { label }, &mut out)?;
    Ok(out)
}

/// Normals from the fixed standard basis.
pub fn build_ambient_normals(zl: &AlgebraElement, zr: &AlgebraElement, metric: &MetricData) -> Result<NormalSet> {
    let n = zl.dim();
    let basis = standard_basis(n)?;
    let mut span = tangent_basis(zl, zr, metric)?;
    let mut out: NormalSet = (Vec::new(), Vec::new(), Vec::new());
    let all = basis.iter().enumerate().map(|(k, (l, b))| (k, l, b.clone()));
    sweep(&mut span, all, n * n - 3, |label| NormalSource::Ambient { label }, &mut out)?;
    Ok(out)
}

/// Frame at one point of a jet.
pub fn build_frame(jet: &FieldJet, kind: &FrameKind) -> Result<FrameBundle> {
    let (zl, zr) = tangent_vectors(jet);
    let metric = metric_from_tangents(&zl, &zr);
    metric.require_regular()?;
    match kind {
        FrameKind::Conjugated { seed, projector_normal: lead } => {
            let completion = complete_with_seed(jet.frame(), *seed);
            conjugated_tangents(&completion.phi, jet.m(), &zl, &zr)?;
            let lead = lead.then(|| projector_normal(jet.frame()));
            let (normals, sources, accepted) = build_normals_with(&completion.phi, jet.m(), &zl, &zr, &metric, lead)?;
            let mut pattern = completion.pivots;
            pattern.extend(accepted);
            Ok(FrameBundle { phi: Some(completion.phi), zl, zr, normals, sources, pattern })
        }
        FrameKind::Ambient => {
            let (normals, sources, pattern) = build_ambient_normals(&zl, &zr, &metric)?;
            Ok(FrameBundle { phi: None, zl, zr, normals, sources, pattern })
        }
    }
}

impl FrameBundle {
    /// Whether `other` continues this frame smoothly: same pivots and no
    /// normal changes orientation.
    pub fn compatible_with(&self, other: &FrameBundle) -> bool {
        self.pattern == other.pattern && self.normals.iter().zip(&other.normals).all(|(a, b)| a.dot(b) >= FLIP_THRESHOLD)
    }

    /// Largest deviation of the normal Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let k = self.normals.len();
        (0..k)
            .flat_map(|a| (0..k).map(move |b| (a, b)))
            .map(|(a, b)| (self.normals[a].dot(&self.normals[b]) - if a == b { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|(Z_D, n_j)|`.
    pub fn tangency_defect(&self) -> f64 {
        self.normals.iter().map(|n| n.dot(&self.zl).abs().max(n.dot(&self.zr).abs())).fold(0.0, f64::max)
    }
}

/// Gauss–Weingarten matrices at one point.
#[derive(Clone, Debug)]
pub struct GaussWeingartenData {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// `max |s^D_jk + s^D_kj|`.
    pub antisymmetry_defect: f64,
    /// Components of the mean curvature vector along the normals.
    pub mean_curvature: Vec<f64>,
}

impl GaussWeingartenData {
    pub fn mean_curvature_norm(&self) -> f64 {
        self.mean_curvature.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `∂_L∂_L Z` rebuilt from the first row of U.
    pub fn reconstruct_dll(&self, frame: &FrameBundle) -> AlgebraElement {
        let row = self.u.row(0);
        let mut out = &frame.zl.scale(row[0]) + &frame.zr.scale(row[1]);
        for (j, n) in frame.normals.iter().enumerate() {
            out = &out + &n.scale(row[2 + j]);
        }
        out
    }
}

/// U and V at one point from the jet, its frame and the derivatives of the
/// normals (`dn_l[j] = ∂_L n_j`, `dn_r[j] = ∂_R n_j`).
pub fn gw_coefficients(
    jet: &FieldJet,
    frame: &FrameBundle,
    dn_l: &[AlgebraElement],
    dn_r: &[AlgebraElement],
    metric: &MetricData,
) -> Result<GaussWeingartenData> {
    metric.require_regular()?;
    let k = frame.normals.len();
    if dn_l.len() != k || dn_r.len() != k {
        return Err(Error::mismatch(format!("{k} normal derivatives"), format!("{} and {}", dn_l.len(), dn_r.len())));
    }
    let d = second_derivatives_z(jet)?;
    let (zl, zr) = (&frame.zl, &frame.zr);
    let (jl, g, jr, det) = (metric.g_ll, metric.g_lr, metric.g_rr, metric.det_g);
    let solve = |p: f64, q: f64| ((jr * p - g * q) / det, (jl * q - g * p) / det);
    let (a_ll, a_lr) = solve(d.ll.dot(zl), d.ll.dot(zr));
    let (a_rl, a_rr) = solve(d.rr.dot(zl), d.rr.dot(zr));
    let ql: Vec<f64> = frame.normals.iter().map(|n| d.ll.dot(n)).collect();
    let qr: Vec<f64> = frame.normals.iter().map(|n| d.rr.dot(n)).collect();
    let h: Vec<f64> = frame.normals.iter().map(|n| d.lr.dot(n)).collect();

    let dim = k + 2;
    let mut u = DMatrix::zeros(dim, dim);
    let mut v = DMatrix::zeros(dim, dim);
    u[(0, 0)] = a_ll;
    u[(0, 1)] = a_lr;
    v[(1, 0)] = a_rl;
    v[(1, 1)] = a_rr;
    for j in 0..k {
        u[(0, 2 + j)] = ql[j];
        u[(1, 2 + j)] = h[j];
        v[(0, 2 + j)] = h[j];
        v[(1, 2 + j)] = qr[j];
        u[(2 + j, 0)] = (h[j] * g - ql[j] * jr) / det;
        u[(2 + j, 1)] = (ql[j] * g - h[j] * jl) / det;
        v[(2 + j, 0)] = (qr[j] * g - h[j] * jr) / det;
        v[(2 + j, 1)] = (h[j] * g - qr[j] * jl) / det;
        for l in 0..k {
            u[(2 + j, 2 + l)] = dn_l[j].dot(&frame.normals[l]);
            v[(2 + j, 2 + l)] = dn_r[j].dot(&frame.normals[l]);
        }
    }
    let mut antisymmetry_defect: f64 = 0.0;
    for j in 0..k {
        for l in 0..k {
            antisymmetry_defect = antisymmetry_defect
                .max((u[(2 + j, 2 + l)] + u[(2 + l, 2 + j)]).abs())
                .max((v[(2 + j, 2 + l)] + v[(2 + l, 2 + j)]).abs());
        }
    }
    let mean_curvature = (0..k).map(|j| (jr * ql[j] - 2.0 * g * h[j] + jl * qr[j]) / det).collect();
    Ok(GaussWeingartenData { u, v, antisymmetry_defect, mean_curvature })
}

/// `‖∂_R U − ∂_L V + [U, V]‖_F` from the derivatives of U and V.
pub fn compatibility_residual(u: &DMatrix<f64>, v: &DMatrix<f64>, du_r: &DMatrix<f64>, dv_l: &DMatrix<f64>) -> f64 {
    (du_r - dv_l + u * v - v * u).norm()
}

/// Per-node compatibility residual on a grid, with centred differences.
/// Nodes on the boundary or next to a missing U/V get `None`. `perturb`
/// adds a constant to one entry of every U (a negative control).
pub fn gauss_codazzi_residual(
    grid: &LightConeGrid,
    u: &[Option<DMatrix<f64>>],
    v: &[Option<DMatrix<f64>>],
    perturb: Option<(usize, usize, f64)>,
) -> Vec<Option<f64>> {
    let shifted = |m: &DMatrix<f64>| {
        let mut m = m.clone();
        if let Some((a, b, c)) = perturb {
            m[(a, b)] += c;
        }
        m
    };
    grid.indices()
        .map(|(i, j)| {
            if !grid.is_interior(i, j, 1) {
                return None;
            }
            fn at<'a>(field: &'a [Option<DMatrix<f64>>], grid: &LightConeGrid, p: usize, q: usize) -> Option<&'a DMatrix<f64>> {
                field[grid.index(p, q)].as_ref()
            }
            let (uc, vc) = (at(u, grid, i, j)?, at(v, grid, i, j)?);
            let (u_up, u_down) = (at(u, grid, i, j + 1)?, at(u, grid, i, j - 1)?);
            let (v_up, v_down) = (at(v, grid, i + 1, j)?, at(v, grid, i - 1, j)?);
            let du_r = (shifted(u_up) - shifted(u_down)) / (2.0 * grid.h_r);
            let dv_l = (v_up - v_down) / (2.0 * grid.h_l);
            Some(compatibility_residual(&shifted(uc), vc, &du_r, &dv_l))
        })
        .collect()
}

/// Frames, U, V and the compatibility residual on a grid.
#[derive(Clone, Debug)]
pub struct FrameField {
    pub grid: LightConeGrid,
    pub kind: FrameKind,
    pub frames: Vec<Option<FrameBundle>>,
    pub gw: Vec<Option<GaussWeingartenData>>,
    /// Nodes left out of the statistics: degenerate metric, or a frame that
    /// is not smooth across the difference stencil.
    pub flagged: Vec<bool>,
    pub gcr: Vec<Option<f64>>,
}

/// Turns the errors that only disqualify a node into `None`.
fn skip_node<T>(result: Result<T>) -> Result<Option<T>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateMetric { .. } | Error::GramSchmidt { .. } | Error::FrameDiscontinuity { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

impl FrameField {
    pub fn from_jets(jets: &JetField, kind: &FrameKind) -> Result<Self> {
        let grid = *jets.grid();
        grid.require_nodes(3, "frame differences")?;
        let frames = jets.jets().par_iter().map(|j| skip_node(build_frame(j, kind))).collect::<Result<Vec<_>>>()?;

        let stencil_nodes = |i: usize, j: usize, axis: Axis| -> Vec<(usize, f64)> {
            let (n, h, k) = match axis {
                Axis::L => (grid.n_l, grid.h_l, i),
                Axis::R => (grid.n_r, grid.h_r, j),
            };
            first_derivative_stencil(n, k, h).iter().filter(|(_, w)| *w != 0.0).map(|&(q, w)| (neighbour(&grid, i, j, axis, q), w)).collect()
        };

        let per_node: Vec<(bool, Option<GaussWeingartenData>)> = grid
            .indices()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&(i, j)| {
                let k = grid.index(i, j);
                let Some(frame) = &frames[k] else { return Ok((true, None)) };
                let mut derivs = Vec::with_capacity(2);
                for axis in [Axis::L, Axis::R] {
                    let stencil = stencil_nodes(i, j, axis);
                    let mut d = vec![AlgebraElement::zero(frame.zl.dim()); frame.normals.len()];
                    for (q, w) in stencil {
                        let Some(other) = &frames[q] else { return Ok((true, None)) };
                        if q != k && !frame.compatible_with(other) {
                            return Ok((true, None));
                        }
                        for (acc, n) in d.iter_mut().zip(&other.normals) {
                            *acc = &*acc + &n.scale(w);
                        }
                    }
                    derivs.push(d);
                }
                let metric = metric_from_tangents(&frame.zl, &frame.zr);
                let gw = gw_coefficients(&jets.jets()[k], frame, &derivs[0], &derivs[1], &metric)?;
                Ok((false, Some(gw)))
            })
            .collect::<Result<_>>()?;
        let flagged: Vec<bool> = per_node.iter().map(|p| p.0).collect();
        let gw: Vec<Option<GaussWeingartenData>> = per_node.into_iter().map(|p| p.1).collect();
        let mut field = FrameField { grid, kind: *kind, frames, gw, flagged, gcr: Vec::new() };
        field.gcr = field.gauss_codazzi(None);
        Ok(field)
    }

    /// Frame field of a closed-form solution, differentiated pointwise with
    /// [`frame_at`] and [`gauss_codazzi_at`] instead of across the grid.
    pub fn from_closed_form(field: &ClosedFormField, grid: &LightConeGrid, kind: &FrameKind) -> Result<Self> {
        type Node = (Option<FrameBundle>, Option<GaussWeingartenData>, Option<f64>);
        let per_node: Vec<Node> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let (l, r) = grid.coords(k);
                let Some(frame) = skip_node(build_frame(&field.jet(l, r), kind))? else { return Ok((None, None, None)) };
                let Some(point) = skip_node(frame_at(field, kind, l, r, NORMAL_STEP))? else { return Ok((Some(frame), None, None)) };
                let gcr = skip_node(gauss_codazzi_at(field, kind, l, r, COEFFICIENT_STEP, NORMAL_STEP))?;
                Ok((Some(point.frame), Some(point.gw), gcr))
            })
            .collect::<Result<_>>()?;
        let flagged = per_node.iter().map(|n| n.2.is_none()).collect();
        let gcr = per_node.iter().map(|n| n.2).collect();
        let (frames, gw): (Vec<_>, Vec<_>) = per_node.into_iter().map(|(f, g, _)| (f, g)).unzip();
        Ok(FrameField { grid: *grid, kind: *kind, frames, gw, flagged, gcr })
    }

    /// Compatibility residual per node, optionally with a perturbed U.
    pub fn gauss_codazzi(&self, perturb: Option<(usize, usize, f64)>) -> Vec<Option<f64>> {
        let u: Vec<Option<DMatrix<f64>>> = self.gw.iter().map(|g| g.as_ref().map(|g| g.u.clone())).collect();
        let v: Vec<Option<DMatrix<f64>>> = self.gw.iter().map(|g| g.as_ref().map(|g| g.v.clone())).collect();
        gauss_codazzi_residual(&self.grid, &u, &v, perturb)
    }

    /// Largest residual over nodes at least `margin` away from the boundary.
    pub fn max_gcr(&self, margin: usize) -> Option<f64> {
        self.grid
            .indices()
            .filter(|&(i, j)| self.grid.is_interior(i, j, margin))
            .filter_map(|(i, j)| self.gcr[self.grid.index(i, j)])
            .reduce(f64::max)
    }

    /// One JSON object per node with Φ, the normals, U, V and the flag.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Node {
            i: usize,
            j: usize,
            flagged: bool,
            phi: Option<Vec<[f64; 2]>>,
            normals: Vec<Vec<[f64; 2]>>,
            sources: Vec<NormalSource>,
            u: Option<Vec<f64>>,
            v: Option<Vec<f64>>,
            gcr: Option<f64>,
        }
        #[derive(Serialize)]
        struct Doc {
            grid: LightConeGrid,
            kind: FrameKind,
            nodes: Vec<Node>,
        }
        let row_major = |m: &DMatrix<f64>| m.transpose().iter().copied().collect::<Vec<f64>>();
        let nodes = self
            .grid
            .indices()
            .map(|(i, j)| {
                let k = self.grid.index(i, j);
                let frame = self.frames[k].as_ref();
                Node {
                    i,
                    j,
                    flagged: self.flagged[k],
                    phi: frame.and_then(|f| f.phi.as_ref()).map(matrix_to_pairs),
                    normals: frame.map(|f| f.normals.iter().map(|n| matrix_to_pairs(n.matrix())).collect()).unwrap_or_default(),
                    sources: frame.map(|f| f.sources.clone()).unwrap_or_default(),
                    u: self.gw[k].as_ref().map(|g| row_major(&g.u)),
                    v: self.gw[k].as_ref().map(|g| row_major(&g.v)),
                    gcr: self.gcr[k],
                }
            })
            .collect();
        Ok(serde_json::to_string(&Doc { grid: self.grid, kind: self.kind, nodes })?)
    }

    /// `xi_l,xi_r,flagged,gcr,antisymmetry,H_norm` per node.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("xi_l,xi_r,flagged,gcr,antisymmetry,H_norm\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        for k in 0..self.grid.len() {
            let (l, r) = self.grid.coords(k);
            let gw = self.gw[k].as_ref();
            let _ = writeln!(
                out,
                "{l:.16e},{r:.16e},{},{},{},{}",
                u8::from(self.flagged[k]),
                opt(self.gcr[k]),
                opt(gw.map(|g| g.antisymmetry_defect)),
                opt(gw.map(|g| g.mean_curvature_norm()))
            );
        }
        out
    }
}

/// Central difference weights of order six for a first derivative.
const CENTRAL6: [(f64, f64); 6] = [
    (-3.0, -1.0 / 60.0),
    (-2.0, 3.0 / 20.0),
    (-1.0, -3.0 / 4.0),
    (1.0, 3.0 / 4.0),
    (2.0, -3.0 / 20.0),
    (3.0, 1.0 / 60.0),
];

/// Step used to differentiate normals of a closed-form field.
pub const NORMAL_STEP: f64 = 1e-3;

/// Step used to differentiate U and V of a closed-form field.
pub const COEFFICIENT_STEP: f64 = 5e-3;

/// Frame and Gauss–Weingarten data of a closed-form field at one point.
#[derive(Clone, Debug)]
pub struct PointFrame {
    pub frame: FrameBundle,
    pub metric: MetricData,
    pub gw: GaussWeingartenData,
}

/// Frame at `(ξ_L, ξ_R)` with normal derivatives from sixth-order central
/// differences of step `delta` (the field can be evaluated anywhere).
pub fn frame_at(field: &ClosedFormField, kind: &FrameKind, xi_l: f64, xi_r: f64, delta: f64) -> Result<PointFrame> {
    let jet = field.jet(xi_l, xi_r);
    let frame = build_frame(&jet, kind)?;
    let derivative = |axis: Axis| -> Result<Vec<AlgebraElement>> {
        let mut d = vec![AlgebraElement::zero(field.n()); frame.normals.len()];
        for (offset, w) in CENTRAL6 {
            let (l, r) = match axis {
                Axis::L => (xi_l + offset * delta, xi_r),
                Axis::R => (xi_l, xi_r + offset * delta),
            };
            let other = build_frame(&field.jet(l, r), kind)?;
            if !frame.compatible_with(&other) {
                return Err(Error::FrameDiscontinuity { xi_l, xi_r });
            }
            for (acc, n) in d.iter_mut().zip(&other.normals) {
                *acc = &*acc + &n.scale(w / delta);
            }
        }
        Ok(d)
    };
    let (dn_l, dn_r) = (derivative(Axis::L)?, derivative(Axis::R)?);
    let metric = metric_from_tangents(&frame.zl, &frame.zr);
    let gw = gw_coefficients(&jet, &frame, &dn_l, &dn_r, &metric)?;
    Ok(PointFrame { frame, metric, gw })
}

/// Compatibility residual of a closed-form field at one point, with U and V
/// differentiated by sixth-order central differences of step `delta` and the
/// normals by step `inner`.
pub fn gauss_codazzi_at(field: &ClosedFormField, kind: &FrameKind, xi_l: f64, xi_r: f64, delta: f64, inner: f64) -> Result<f64> {
    let centre = frame_at(field, kind, xi_l, xi_r, inner)?;
    let dim = centre.gw.u.nrows();
    let mut du_r = DMatrix::zeros(dim, dim);
    let mut dv_l = DMatrix::zeros(dim, dim);
    for (offset, w) in CENTRAL6 {
        let up = frame_at(field, kind, xi_l, xi_r + offset * delta, inner)?;
        let side = frame_at(field, kind, xi_l + offset * delta, xi_r, inner)?;
        for other in [&up.frame, &side.frame] {
            if !centre.frame.compatible_with(other) {
                return Err(Error::FrameDiscontinuity { xi_l, xi_r });
            }
        }
        du_r += up.gw.u * (w / delta);
        dv_l += side.gw.v * (w / delta);
    }
    Ok(compatibility_residual(&centre.gw.u, &centre.gw.v, &du_r, &dv_l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fundamental_form_ii_and_h, induced_metric};
    use crate::solutions::{balanced_torus, constant_solution, direct_sum, AnalyticSolution};
    use crate::sun_algebra::conjugate_by;

    fn flat_plane() -> AnalyticSolution {
        let t1 = balanced_torus(1.0, -1.0, 0.0, 0.0).unwrap();
        let t2 = balanced_torus(0.0, 0.0, 1.0, -1.0).unwrap();
        direct_sum(&t1, &t2).unwrap()
    }

    fn check_completion(x: &StiefelFrame, phi: &ComplexMatrix) {
        linalg::check_unitary(phi, true, 1e-10).unwrap();
        let head = phi.view((0, 0), (x.n(), x.m())).into_owned();
        assert!(frob(&(head - x.matrix())) < 1e-10);
    }

    #[test]
    fn completion_examples() {
        let e1 = StiefelFrame::canonical(2, 1).unwrap();
        assert!(frob(&(complete_to_group(&e1) - linalg::identity(2))) < 1e-15);
        let e2 = StiefelFrame::new(ComplexMatrix::from_column_slice(2, 1, &[linalg::c(0.0, 0.0), linalg::c(1.0, 0.0)])).unwrap();
        let phi = complete_to_group(&e2);
        let expected = ComplexMatrix::from_row_slice(2, 2, &[linalg::c(0.0, 0.0), linalg::c(-1.0, 0.0), linalg::c(1.0, 0.0), linalg::c(0.0, 0.0)]);
        assert!(frob(&(phi - expected)) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let x = StiefelFrame::random(4, 2, &mut rng).unwrap();
            check_completion(&x, &complete_to_group(&x));
            check_completion(&x, &complete_with_seed(&x, CompletionSeed::Rotated { seed: 3 }).phi);
        }
    }

    #[test]
    fn conjugated_tangents_are_off_diagonal() {
        let torus = balanced_torus(1.0, -1.0, 0.5, 0.0).unwrap();
        let jet = torus.jet(0.3, 0.8);
        let (zl, zr) = tangent_vectors(&jet);
        let phi = complete_to_group(jet.frame());
        let (tl, _) = conjugated_tangents(&phi, 1, &zl, &zr).unwrap();
        assert!(tl[(0, 0)].norm() < 1e-14 && tl[(1, 1)].norm() < 1e-14 && tl[(0, 1)].norm() > 0.1);

        let constant = constant_solution(StiefelFrame::canonical(3, 1).unwrap()).unwrap();
        let jet0 = constant.jet(0.0, 0.0);
        let (z0l, z0r) = tangent_vectors(&jet0);
        let (a, b) = conjugated_tangents(&complete_to_group(jet0.frame()), 1, &z0l, &z0r).unwrap();
        assert_eq!(frob(&a) + frob(&b), 0.0);

        // a completion taken at another point does not split the tangents
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = StiefelFrame::random(4, 2, &mut rng).unwrap();
        let a = linalg::random_anti_hermitian(4, &mut rng);
        let jet = FieldJet::new(x.clone(), &a * x.matrix(), &a * x.matrix()).unwrap();
        let (zl, zr) = tangent_vectors(&jet);
        let wrong = complete_to_group(&StiefelFrame::random(4, 2, &mut rng).unwrap());
        assert!(matches!(conjugated_tangents(&wrong, 2, &zl, &zr), Err(Error::BlockStructure { .. })));
    }

    #[test]
    fn projector_normal_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (n, m) in [(2, 1), (3, 1), (4, 2), (5, 2)] {
            let x = StiefelFrame::random(n, m, &mut rng).unwrap();
            let np = projector_normal(&x);
            assert!((np.norm() - 1.0).abs() < 1e-12);
            assert!(linalg::trace(np.matrix()).norm() < 1e-12);
            let a = linalg::random_anti_hermitian(n, &mut rng);
            let b = linalg::random_anti_hermitian(n, &mut rng);
            let jet = FieldJet::new(x.clone(), &a * x.matrix(), &b * x.matrix()).unwrap();
            let (zl, zr) = tangent_vectors(&jet);
            assert!(np.dot(&zl).abs() < 1e-12 && np.dot(&zr).abs() < 1e-12);
        }
        // su(2): ± the conjugated C_1
        let x = StiefelFrame::random(2, 1, &mut rng).unwrap();
        let phi = complete_to_group(&x);
        let c1 = standard_basis(2).unwrap().elements()[2].clone();
        let conj = conjugate_by(&phi, &c1).unwrap();
        let np = projector_normal(&x);
        assert!((np.dot(&conj).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_counts_and_orthonormality() {
        let plane = flat_plane();
        let frame = build_frame(&plane.jet(0.2, 0.7), &FrameKind::default()).unwrap();
        assert_eq!(frame.normals.len(), 13);
        assert!(frame.orthonormality_defect() < 1e-12);
        assert!(frame.tangency_defect() < 1e-12);

        let t1 = balanced_torus(1.0, -1.0, 0.0, 0.0).unwrap();
        let t2 = balanced_torus(0.0, 0.0, 1.0, -1.0).unwrap();
        let with_np = FrameKind::Conjugated { seed: CompletionSeed::Canonical, projector_normal: true };
        let frame = build_frame(&direct_sum(&t1, &t2).unwrap().jet(0.1, 0.1), &with_np).unwrap();
        assert_eq!(frame.normals.len(), 13);
        assert!(frame.sources.contains(&NormalSource::Projector));
        assert!(frame.orthonormality_defect() < 1e-12);

        let ambient = build_frame(&plane.jet(0.2, 0.7), &FrameKind::Ambient).unwrap();
        assert_eq!(ambient.normals.len(), 13);
        assert!(ambient.orthonormality_defect() < 1e-12);

        let torus = balanced_torus(1.0, -1.0, 0.5, 0.0).unwrap();
        assert!(matches!(build_frame(&torus.jet(0.0, 0.0), &FrameKind::default()), Err(Error::DegenerateMetric { .. })));
    }

    #[test]
    fn su2_regular_point_has_one_normal() {
        // a generic jet in G(1, 1) with independent tangents
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = StiefelFrame::random(2, 1, &mut rng).unwrap();
        let a = linalg::random_anti_hermitian(2, &mut rng);
        let b = linalg::random_anti_hermitian(2, &mut rng);
        let jet = FieldJet::new(x.clone(), &a * x.matrix(), &b * x.matrix()).unwrap();
        let frame = build_frame(&jet, &FrameKind::default()).unwrap();
        assert_eq!(frame.normals.len(), 1);
    }

    #[test]
    fn normal_parts_split_by_block() {
        let t1 = balanced_torus(0.8, -0.6, 0.2, 0.5).unwrap();
        let t2 = balanced_torus(0.1, 0.3, 1.2, -0.4).unwrap();
        let s = direct_sum(&t1, &t2).unwrap();
        let kind = FrameKind::default();
        let p = frame_at(&s, &kind, 0.3, -0.2, NORMAL_STEP).unwrap();
        let jet = s.jet(0.3, -0.2);
        let d = second_derivatives_z(&jet).unwrap();
        for (n, src) in p.frame.normals.iter().zip(&p.frame.sources) {
            match src {
                NormalSource::DiagonalBlock { .. } => {
                    assert!(n.dot(&d.ll).abs() < 1e-9 && n.dot(&d.rr).abs() < 1e-9);
                }
                NormalSource::OffDiagonal { .. } => assert!(n.dot(&d.lr).abs() < 1e-9),
                _ => {}
            }
        }
        // row 1 of U rebuilds ∂_L∂_L Z
        assert!((&p.gw.reconstruct_dll(&p.frame) - &d.ll).norm() < 1e-8);
        // |H| from the frame equals |H| from the fundamental forms
        let ii = fundamental_form_ii_and_h(&jet, &induced_metric(&jet)).unwrap();
        assert!((p.gw.mean_curvature_norm() - ii.h.norm()).abs() < 1e-10);
        assert!(p.gw.antisymmetry_defect < 1e-9);
    }

    #[test]
    fn ambient_frame_of_the_flat_plane_is_constant() {
        let plane = flat_plane();
        let p = frame_at(&plane, &FrameKind::Ambient, 0.4, 0.1, NORMAL_STEP).unwrap();
        assert!(p.gw.u.norm() < 1e-12 && p.gw.v.norm() < 1e-12);
        let r = gauss_codazzi_at(&plane, &FrameKind::Ambient, 0.4, 0.1, COEFFICIENT_STEP, NORMAL_STEP).unwrap();
        assert!(r < 1e-10);
    }

    #[test]
    fn perturbed_u_breaks_compatibility() {
        let t1 = balanced_torus(0.8, -0.6, 0.2, 0.5).unwrap();
        let t2 = balanced_torus(0.1, 0.3, 1.2, -0.4).unwrap();
        let s = direct_sum(&t1, &t2).unwrap();
        let grid = LightConeGrid::square(9, 0.0, 0.4).unwrap();
        let field = FrameField::from_jets(&s.sample(&grid), &FrameKind::default()).unwrap();
        let clean = field.max_gcr(1).unwrap();
        let perturbed = field.gauss_codazzi(Some((0, 2, 1.0))).into_iter().flatten().fold(0.0, f64::max);
        assert!(perturbed > 1e-2 && perturbed > 10.0 * clean, "{clean} {perturbed}");
    }
}
