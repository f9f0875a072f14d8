//! The surface Z in su(N) recovered from the closed 1-form
//! `Z_L dξ_L + Z_R dξ_R` by path integration.
//!
//! Integration uses the trapezoidal rule along grid edges. The canonical
//! path from the basepoint `(i₀, j₀)` to `(i, j)` runs along the row `j₀` to
//! `(i, j₀)` and then along the column `i` ([`IntegrationPath::RowFirst`]).

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_model::tangent_vectors;
use crate::solutions::{matrix_to_pairs, JetField, LightConeGrid};
use crate::sun_algebra::{standard_basis, AlgebraElement};

/// Tangent vectors Z_L, Z_R on every node of a grid.
#[derive(Clone, Debug)]
pub struct TangentField {
    grid: LightConeGrid,
    zl: Vec<AlgebraElement>,
    zr: Vec<AlgebraElement>,
}

impl TangentField {
    pub fn from_jets(jets: &JetField) -> Self {
        let (zl, zr) = jets.jets().par_iter().map(tangent_vectors).unzip();
        TangentField { grid: *jets.grid(), zl, zr }
    }

    pub fn new(grid: LightConeGrid, zl: Vec<AlgebraElement>, zr: Vec<AlgebraElement>) -> Result<Self> {
        grid.validate()?;
        if zl.len() != grid.len() || zr.len() != grid.len() {
            return Err(Error::mismatch(format!("{} tangents", grid.len()), format!("{} and {}", zl.len(), zr.len())));
        }
        Ok(TangentField { grid, zl, zr })
    }

    pub fn grid(&self) -> &LightConeGrid {
        &self.grid
    }

    pub fn zl(&self) -> &[AlgebraElement] {
        &self.zl
    }

    pub fn zr(&self) -> &[AlgebraElement] {
        &self.zr
    }

    pub fn dim(&self) -> usize {
        self.zl[0].dim()
    }

    fn at_l(&self, i: usize, j: usize) -> &AlgebraElement {
        &self.zl[self.grid.index(i, j)]
    }

    fn at_r(&self, i: usize, j: usize) -> &AlgebraElement {
        &self.zr[self.grid.index(i, j)]
    }

    /// Trapezoid increment along the ξ_L edge from `(i, j)` to `(i + 1, j)`.
    fn edge_l(&self, i: usize, j: usize) -> AlgebraElement {
        (0.5 * self.grid.h_l) * &(self.at_l(i, j) + self.at_l(i + 1, j))
    }

    /// Trapezoid increment along the ξ_R edge from `(i, j)` to `(i, j + 1)`.
    fn edge_r(&self, i: usize, j: usize) -> AlgebraElement {
        (0.5 * self.grid.h_r) * &(self.at_r(i, j) + self.at_r(i, j + 1))
    }

    /// Counter-clockwise circulation around the plaquette with lower-left
    /// corner `(i, j)`.
    fn circulation(&self, i: usize, j: usize) -> AlgebraElement {
        let out = &self.edge_l(i, j) + &self.edge_r(i + 1, j);
        let back = &self.edge_l(i, j + 1) + &self.edge_r(i, j);
        &out - &back
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationPath {
    /// Along ξ_L from the basepoint, then along ξ_R.
    RowFirst,
    /// Along ξ_R from the basepoint, then along ξ_L.
    ColumnFirst,
}

/// Z on every node together with its coordinates in the standard basis.
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    grid: LightConeGrid,
    basepoint: (usize, usize),
    path: IntegrationPath,
    z0: AlgebraElement,
    z: Vec<AlgebraElement>,
    coords: Vec<Vec<f64>>,
}

/// Integrate the tangents of `jets` along the canonical path.
pub fn weierstrass_integrate(jets: &JetField, basepoint: (usize, usize), z0: &AlgebraElement) -> Result<SurfaceMesh> {
    integrate_tangents(&TangentField::from_jets(jets), basepoint, z0, IntegrationPath::RowFirst)
}

/// Cumulative trapezoid sums outward from `start` in both directions.
fn prefix_line(len: usize, start: usize, zero: &AlgebraElement, step: impl Fn(usize) -> AlgebraElement) -> Vec<AlgebraElement> {
    let mut out = vec![zero.clone(); len];
    for k in start + 1..len {
        out[k] = &out[k - 1] + &step(k - 1);
    }
    for k in (0..start).rev() {
        out[k] = &out[k + 1] - &step(k);
    }
    out
}

pub fn integrate_tangents(tangents: &TangentField, basepoint: (usize, usize), z0: &AlgebraElement, path: IntegrationPath) -> Result<SurfaceMesh> {
    let grid = tangents.grid;
    let (i0, j0) = basepoint;
    grid.check_basepoint(i0, j0)?;
    if z0.dim() != tangents.dim() {
        return Err(Error::mismatch(format!("su({})", tangents.dim()), format!("su({})", z0.dim())));
    }
    let mut z = vec![z0.clone(); grid.len()];
    match path {
        IntegrationPath::RowFirst => {
            let row = prefix_line(grid.n_l, i0, z0, |i| tangents.edge_l(i, j0));
            let columns: Vec<Vec<AlgebraElement>> = (0..grid.n_l)
                .into_par_iter()
                .map(|i| prefix_line(grid.n_r, j0, &row[i], |j| tangents.edge_r(i, j)))
                .collect();
            for (i, col) in columns.into_iter().enumerate() {
                for (j, v) in col.into_iter().enumerate() {
                    z[grid.index(i, j)] = v;
                }
            }
        }
        IntegrationPath::ColumnFirst => {
            let column = prefix_line(grid.n_r, j0, z0, |j| tangents.edge_r(i0, j));
            let rows: Vec<Vec<AlgebraElement>> = (0..grid.n_r)
                .into_par_iter()
                .map(|j| prefix_line(grid.n_l, i0, &column[j], |i| tangents.edge_l(i, j)))
                .collect();
            for (j, row) in rows.into_iter().enumerate() {
                for (i, v) in row.into_iter().enumerate() {
                    z[grid.index(i, j)] = v;
                }
            }
        }
    }
    let basis = standard_basis(tangents.dim())?;
    let coords = z.par_iter().map(|e| basis.to_coordinates(e)).collect::<Result<Vec<_>>>()?;
    Ok(SurfaceMesh { grid, basepoint, path, z0: z0.clone(), z, coords })
}

/// Norms of the plaquette circulations, indexed by lower-left corner
/// `(i, j)` at `j * (n_l − 1) + i`.
pub fn plaquette_circulations(tangents: &TangentField) -> Vec<f64> {
    let g = tangents.grid;
    (0..g.n_r - 1)
        .flat_map(|j| (0..g.n_l - 1).map(move |i| (i, j)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, j)| tangents.circulation(i, j).norm())
        .collect()
}

/// Largest plaquette circulation per unit area. This is a discrete curl of
/// the 1-form; it vanishes for solutions up to the truncation error and
/// tends to a positive limit otherwise.
pub fn loop_closedness_residual(tangents: &TangentField) -> Result<f64> {
    let g = tangents.grid;
    if g.n_l < 2 || g.n_r < 2 {
        return Err(Error::InvalidGrid("closedness needs at least one plaquette".into()));
    }
    let area = g.h_l * g.h_r;
    Ok(plaquette_circulations(tangents).into_iter().fold(0.0, f64::max) / area)
}

/// Comparison of row-first and column-first integration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathComparison {
    /// Largest node-wise ‖Z_row − Z_column‖.
    pub max_difference: f64,
    /// Largest value of ‖Z_row − Z_column‖ minus the summed norms of the
    /// plaquette circulations enclosed between the two paths; non-positive
    /// up to rounding.
    pub max_excess: f64,
}

pub fn compare_paths(tangents: &TangentField, basepoint: (usize, usize)) -> Result<PathComparison> {
    let g = tangents.grid;
    let z0 = AlgebraElement::zero(tangents.dim());
    let row = integrate_tangents(tangents, basepoint, &z0, IntegrationPath::RowFirst)?;
    let col = integrate_tangents(tangents, basepoint, &z0, IntegrationPath::ColumnFirst)?;
    let circ = plaquette_circulations(tangents);
    // prefix[j][i] = sum of circulation norms over plaquettes (p, q) with p < i, q < j
    let (pl, pr) = (g.n_l - 1, g.n_r - 1);
    let mut prefix = vec![vec![0.0; g.n_l]; g.n_r];
    for j in 0..pr {
        for i in 0..pl {
            prefix[j + 1][i + 1] = circ[j * pl + i] + prefix[j][i + 1] + prefix[j + 1][i] - prefix[j][i];
        }
    }
    let enclosed = |i: usize, j: usize| {
        let (ia, ib) = (i.min(basepoint.0), i.max(basepoint.0));
        let (ja, jb) = (j.min(basepoint.1), j.max(basepoint.1));
        prefix[jb][ib] - prefix[ja][ib] - prefix[jb][ia] + prefix[ja][ia]
    };
    let mut out = PathComparison { max_difference: 0.0, max_excess: f64::NEG_INFINITY };
    for (i, j) in g.indices() {
        let k = g.index(i, j);
        let diff = (&row.z[k] - &col.z[k]).norm();
        out.max_difference = out.max_difference.max(diff);
        out.max_excess = out.max_excess.max(diff - enclosed(i, j));
    }
    Ok(out)
}

/// How a 3-D view of the surface was chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Projection {
    /// Three coordinates of the standard basis (0-based indices).
    Coordinates { indices: [usize; 3] },
    /// The three leading principal components of the node cloud.
    Principal,
}

/// A 3-D view of the surface.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Projection3d {
    pub projection: Projection,
    /// Unit vectors in ℝ^{N²−1} spanning the view.
    pub axes: Vec<Vec<f64>>,
    /// Fraction of the cloud's variance captured by each axis.
    pub explained_variance: Vec<f64>,
    pub points: Vec<[f64; 3]>,
}

impl SurfaceMesh {
    pub fn grid(&self) -> &LightConeGrid {
        &self.grid
    }

    pub fn basepoint(&self) -> (usize, usize) {
        self.basepoint
    }

    pub fn path(&self) -> IntegrationPath {
        self.path
    }

    pub fn z0(&self) -> &AlgebraElement {
        &self.z0
    }

    pub fn z(&self) -> &[AlgebraElement] {
        &self.z
    }

    pub fn at(&self, i: usize, j: usize) -> &AlgebraElement {
        &self.z[self.grid.index(i, j)]
    }

    /// Coordinates in ℝ^{N²−1} with respect to the standard basis.
    pub fn coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.z0.dim()
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Node<'a> {
            i: usize,
            j: usize,
            xi_l: f64,
            xi_r: f64,
            coords: &'a [f64],
            matrix: Vec<[f64; 2]>,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            n: usize,
            grid: LightConeGrid,
            basepoint: [usize; 2],
            path: IntegrationPath,
            z0: Vec<[f64; 2]>,
            nodes: Vec<Node<'a>>,
        }
        let nodes = self
            .grid
            .indices()
            .map(|(i, j)| {
                let k = self.grid.index(i, j);
                Node {
                    i,
                    j,
                    xi_l: self.grid.xi_l(i),
                    xi_r: self.grid.xi_r(j),
                    coords: &self.coords[k],
                    matrix: matrix_to_pairs(self.z[k].matrix()),
                }
            })
            .collect();
        let doc = Doc {
            n: self.dim(),
            grid: self.grid,
            basepoint: [self.basepoint.0, self.basepoint.1],
            path: self.path,
            z0: matrix_to_pairs(self.z0.matrix()),
            nodes,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    /// One line per node: `xi_l,xi_r,c1,…,c_{N²−1}`.
    pub fn to_csv(&self) -> String {
        let d = self.coords[0].len();
        let mut out = String::from("xi_l,xi_r");
        for k in 1..=d {
            let _ = write!(out, ",c{k}");
        }
        out.push('\n');
        for (i, j) in self.grid.indices() {
            let _ = write!(out, "{:.16e},{:.16e}", self.grid.xi_l(i), self.grid.xi_r(j));
            for x in &self.coords[self.grid.index(i, j)] {
                let _ = write!(out, ",{x:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn project(&self, projection: &Projection) -> Result<Projection3d> {
        let d = self.coords[0].len();
        let count = self.coords.len();
        let mean: Vec<f64> = (0..d).map(|a| self.coords.iter().map(|c| c[a]).sum::<f64>() / count as f64).collect();
        let centred = DMatrix::from_fn(count, d, |r, a| self.coords[r][a] - mean[a]);
        let cov = centred.transpose() * &centred / count.max(1) as f64;
        let total = cov.trace();
        let axes: Vec<DVector<f64>> = match projection {
            Projection::Coordinates { indices } => {
                if let Some(&bad) = indices.iter().find(|&&k| k >= d) {
                    return Err(Error::Config(format!("projection index {bad} out of range for {d} coordinates")));
                }
                indices.iter().map(|&k| DVector::from_fn(d, |a, _| if a == k { 1.0 } else { 0.0 })).collect()
            }
            Projection::Principal => {
                if d < 3 {
                    return Err(Error::InvalidDimension(format!("need 3 coordinates for a 3-D view, have {d}")));
                }
                let eig = cov.clone().symmetric_eigen();
                let mut order: Vec<usize> = (0..d).collect();
                order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
                order[..3]
                    .iter()
                    .map(|&k| {
                        let mut v = eig.eigenvectors.column(k).into_owned();
                        // fix the sign so the largest component is positive
                        let (arg, _) = v.iter().enumerate().fold((0, 0.0), |acc, (a, x)| if x.abs() > acc.1 { (a, x.abs()) } else { acc });
                        if v[arg] < 0.0 {
                            v = -v;
                        }
                        v
                    })
                    .collect()
            }
        };
        let explained = axes
            .iter()
            .map(|v| if total > 0.0 { (v.transpose() * &cov * v)[(0, 0)] / total } else { 0.0 })
            .collect();
        let points = (0..count)
            .map(|r| {
                let row = centred.row(r).transpose();
                [axes[0].dot(&row), axes[1].dot(&row), axes[2].dot(&row)]
            })
            .collect();
        Ok(Projection3d {
            projection: projection.clone(),
            axes: axes.iter().map(|v| v.iter().copied().collect()).collect(),
            explained_variance: explained,
            points,
        })
    }
}
