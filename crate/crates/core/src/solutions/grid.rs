//! Light-cone grids, fields sampled on them, and grid finite differences.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_model::{current_derivatives, currents, FieldJet, SecondDerivatives, StiefelFrame};
use crate::linalg::{self, ComplexMatrix};

/// Rectangular grid in (ξ_L, ξ_R).
///
/// Node `(i, j)` sits at `(ξ_L0 + i h_L, ξ_R0 + j h_R)`. Nodes are stored row by
/// row, a row being a line of constant ξ_R: index `j * n_l + i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightConeGrid {
    pub xi_l0: f64,
    pub xi_r0: f64,
    pub h_l: f64,
    pub h_r: f64,
    pub n_l: usize,
    pub n_r: usize,
}

impl LightConeGrid {
    pub fn new(xi_l0: f64, xi_r0: f64, h_l: f64, h_r: f64, n_l: usize, n_r: usize) -> Result<Self> {
        let grid = LightConeGrid { xi_l0, xi_r0, h_l, h_r, n_l, n_r };
        grid.validate()?;
        Ok(grid)
    }

    /// `n × n` nodes covering `[lo, hi]²`.
    pub fn square(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 nodes per direction, got {n}")));
        }
        let h = (hi - lo) / (n - 1) as f64;
        LightConeGrid::new(lo, lo, h, h, n, n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_l > 0.0 && self.h_r > 0.0 && self.h_l.is_finite() && self.h_r.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacings must be positive, got ({}, {})", self.h_l, self.h_r)));
        }
        if !(self.xi_l0.is_finite() && self.xi_r0.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        if self.n_l < 2 || self.n_r < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2x2 nodes, got {}x{}", self.n_l, self.n_r)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_l * self.n_r
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_l && j < self.n_r);
        j * self.n_l + i
    }

    pub fn node(&self, index: usize) -> (usize, usize) {
        (index % self.n_l, index / self.n_l)
    }

    pub fn xi_l(&self, i: usize) -> f64 {
        self.xi_l0 + i as f64 * self.h_l
    }

    pub fn xi_r(&self, j: usize) -> f64 {
        self.xi_r0 + j as f64 * self.h_r
    }

    pub fn coords(&self, index: usize) -> (f64, f64) {
        let (i, j) = self.node(index);
        (self.xi_l(i), self.xi_r(j))
    }

    /// Same domain with both spacings halved.
    pub fn refined(&self) -> LightConeGrid {
        LightConeGrid {
            h_l: self.h_l / 2.0,
            h_r: self.h_r / 2.0,
            n_l: 2 * self.n_l - 1,
            n_r: 2 * self.n_r - 1,
            ..*self
        }
    }

    /// Whether node `(i, j)` is at least `margin` nodes away from every edge.
    pub fn is_interior(&self, i: usize, j: usize, margin: usize) -> bool {
        i >= margin && j >= margin && i + margin < self.n_l && j + margin < self.n_r
    }

    /// Node indices in storage order.
    pub fn indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_r).flat_map(move |j| (0..self.n_l).map(move |i| (i, j)))
    }

    pub fn check_basepoint(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.n_l || j >= self.n_r {
            return Err(Error::InvalidBasepoint { i, j, n_l: self.n_l, n_r: self.n_r });
        }
        Ok(())
    }

    pub(crate) fn require_nodes(&self, min: usize, what: &str) -> Result<()> {
        if self.n_l < min || self.n_r < min {
            return Err(Error::InvalidGrid(format!(
                "{what} needs at least {min}x{min} nodes, grid has {}x{}",
                self.n_l, self.n_r
            )));
        }
        Ok(())
    }
}

/// Values that finite-difference stencils can combine linearly.
pub trait Linear: Clone {
    fn combine(terms: &[(f64, &Self)]) -> Self;
}

impl Linear for f64 {
    fn combine(terms: &[(f64, &Self)]) -> Self {
        terms.iter().map(|(w, v)| w * **v).sum()
    }
}

impl Linear for ComplexMatrix {
    fn combine(terms: &[(f64, &Self)]) -> Self {
        let mut out = terms[0].1.scale(terms[0].0);
        for (w, v) in &terms[1..] {
            out += v.scale(*w);
        }
        out
    }
}

impl Linear for DMatrix<f64> {
    fn combine(terms: &[(f64, &Self)]) -> Self {
        let mut out = terms[0].1 * terms[0].0;
        for (w, v) in &terms[1..] {
            out += *v * *w;
        }
        out
    }
}

/// Grid direction of a finite difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    L,
    R,
}

fn axis_geometry(grid: &LightConeGrid, axis: Axis) -> (usize, f64) {
    match axis {
        Axis::L => (grid.n_l, grid.h_l),
        Axis::R => (grid.n_r, grid.h_r),
    }
}

pub(crate) fn neighbour(grid: &LightConeGrid, i: usize, j: usize, axis: Axis, k: usize) -> usize {
    match axis {
        Axis::L => grid.index(k, j),
        Axis::R => grid.index(i, k),
    }
}

/// Weights `(node, weight)` of the second-order first-derivative stencil at
/// position `k` of a line of `n ≥ 3` nodes with spacing `h`: centred inside,
/// one-sided on the two ends.
pub fn first_derivative_stencil(n: usize, k: usize, h: f64) -> [(usize, f64); 3] {
    let s = 1.0 / h;
    if k == 0 {
        [(0, -1.5 * s), (1, 2.0 * s), (2, -0.5 * s)]
    } else if k == n - 1 {
        [(n - 3, 0.5 * s), (n - 2, -2.0 * s), (n - 1, 1.5 * s)]
    } else {
        [(k - 1, -0.5 * s), (k, 0.0), (k + 1, 0.5 * s)]
    }
}

/// Second-order first derivative along `axis`. Needs at least 3 nodes along
/// the axis.
pub fn first_derivative<T: Linear>(grid: &LightConeGrid, values: &[T], axis: Axis) -> Result<Vec<T>> {
    let (n, h) = axis_geometry(grid, axis);
    if n < 3 {
        return Err(Error::InvalidGrid(format!("first differences need 3 nodes along an axis, got {n}")));
    }
    check_len(grid, values.len())?;
    Ok(grid
        .indices()
        .map(|(i, j)| {
            let k = if axis == Axis::L { i } else { j };
            let terms: Vec<(f64, &T)> = first_derivative_stencil(n, k, h)
                .iter()
                .filter(|(_, w)| *w != 0.0)
                .map(|&(q, w)| (w, &values[neighbour(grid, i, j, axis, q)]))
                .collect();
            T::combine(&terms)
        })
        .collect())
}

/// Second-order second derivative along `axis`. Needs at least 4 nodes.
pub fn second_derivative<T: Linear>(grid: &LightConeGrid, values: &[T], axis: Axis) -> Result<Vec<T>> {
    let (n, h) = axis_geometry(grid, axis);
    if n < 4 {
        return Err(Error::InvalidGrid(format!("second differences need 4 nodes along an axis, got {n}")));
    }
    check_len(grid, values.len())?;
    let s = 1.0 / (h * h);
    Ok(grid
        .indices()
        .map(|(i, j)| {
            let k = if axis == Axis::L { i } else { j };
            let at = |k: usize| &values[neighbour(grid, i, j, axis, k)];
            if k == 0 {
                T::combine(&[(2.0 * s, at(0)), (-5.0 * s, at(1)), (4.0 * s, at(2)), (-s, at(3))])
            } else if k == n - 1 {
                T::combine(&[(-s, at(n - 4)), (4.0 * s, at(n - 3)), (-5.0 * s, at(n - 2)), (2.0 * s, at(n - 1))])
            } else {
                T::combine(&[(s, at(k - 1)), (-2.0 * s, at(k)), (s, at(k + 1))])
            }
        })
        .collect())
}

fn check_len(grid: &LightConeGrid, len: usize) -> Result<()> {
    if len != grid.len() {
        return Err(Error::mismatch(format!("{} node values", grid.len()), len.to_string()));
    }
    Ok(())
}

/// Where a grid field came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Analytic { name: String },
    Solved { description: String, seed: Option<u64> },
}

/// Stiefel frames on every node of a grid.
#[derive(Clone, Debug)]
pub struct GridField {
    grid: LightConeGrid,
    frames: Vec<StiefelFrame>,
    provenance: Provenance,
}

impl GridField {
    pub fn new(grid: LightConeGrid, frames: Vec<StiefelFrame>, provenance: Provenance) -> Result<Self> {
        grid.validate()?;
        check_len(&grid, frames.len())?;
        let shape = frames[0].matrix().shape();
        if let Some(bad) = frames.iter().find(|f| f.matrix().shape() != shape) {
            return Err(Error::mismatch(
                format!("{}x{} frames", shape.0, shape.1),
                format!("{}x{}", bad.n(), bad.m()),
            ));
        }
        Ok(GridField { grid, frames, provenance })
    }

    pub fn grid(&self) -> &LightConeGrid {
        &self.grid
    }

    pub fn frames(&self) -> &[StiefelFrame] {
        &self.frames
    }

    pub fn frame(&self, i: usize, j: usize) -> &StiefelFrame {
        &self.frames[self.grid.index(i, j)]
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn n(&self) -> usize {
        self.frames[0].n()
    }

    pub fn m(&self) -> usize {
        self.frames[0].m()
    }

    /// Jets from second-order finite differences of the node values.
    pub fn finite_difference_jets(&self) -> Result<JetField> {
        self.grid.require_nodes(4, "finite-difference jets")?;
        let values: Vec<ComplexMatrix> = self.frames.iter().map(|f| f.matrix().clone()).collect();
        let dl = first_derivative(&self.grid, &values, Axis::L)?;
        let dr = first_derivative(&self.grid, &values, Axis::R)?;
        let ll = second_derivative(&self.grid, &values, Axis::L)?;
        let rr = second_derivative(&self.grid, &values, Axis::R)?;
        let lr = first_derivative(&self.grid, &dl, Axis::R)?;
        let jets = self
            .frames
            .iter()
            .zip(dl)
            .zip(dr)
            .zip(ll)
            .zip(lr)
            .zip(rr)
            .map(|(((((x, dl), dr), ll), lr), rr)| FieldJet::approximate(x.clone(), dl, dr, Some(SecondDerivatives { ll, lr, rr })))
            .collect::<Result<Vec<_>>>()?;
        Ok(JetField { grid: self.grid, jets, exact: false })
    }

    /// Largest node-wise distance `‖X − Y‖_F` to another field on the same grid.
    pub fn max_distance(&self, other: &GridField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::mismatch("identical grids", "different grids"));
        }
        Ok(self
            .frames
            .iter()
            .zip(&other.frames)
            .map(|(a, b)| linalg::frob(&(a.matrix() - b.matrix())))
            .fold(0.0, f64::max))
    }

    /// Smallest singular value of the upper m×m block of X over all nodes.
    /// It equals that of the lower n×n block of any unitary completion, so it
    /// measures how far the field stays from the edge of the standard chart.
    pub fn chart_margin(&self) -> f64 {
        self.frames.iter().map(chart_margin).fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&GridFieldDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GridFieldDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

pub fn chart_margin(x: &StiefelFrame) -> f64 {
    let m = x.m();
    let top = x.matrix().view((0, 0), (m, m)).into_owned();
    linalg::smallest_singular_value(&top)
}

/// Serialized layout of a [`GridField`]; each node matrix is a row-major list
/// of `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
struct GridFieldDoc {
    n: usize,
    m: usize,
    grid: LightConeGrid,
    provenance: Provenance,
    nodes: Vec<Vec<[f64; 2]>>,
}

pub(crate) fn matrix_to_pairs(m: &ComplexMatrix) -> Vec<[f64; 2]> {
    (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| (r, c))).map(|(r, c)| [m[(r, c)].re, m[(r, c)].im]).collect()
}

pub(crate) fn pairs_to_matrix(rows: usize, cols: usize, pairs: &[[f64; 2]]) -> Result<ComplexMatrix> {
    if pairs.len() != rows * cols {
        return Err(Error::mismatch(format!("{} entries", rows * cols), pairs.len().to_string()));
    }
    Ok(ComplexMatrix::from_row_iterator(rows, cols, pairs.iter().map(|[re, im]| Complex64::new(*re, *im))))
}

impl From<&GridField> for GridFieldDoc {
    fn from(f: &GridField) -> Self {
        GridFieldDoc {
            n: f.n(),
            m: f.m(),
            grid: f.grid,
            provenance: f.provenance.clone(),
            nodes: f.frames.iter().map(|x| matrix_to_pairs(x.matrix())).collect(),
        }
    }
}

impl TryFrom<GridFieldDoc> for GridField {
    type Error = Error;

    fn try_from(doc: GridFieldDoc) -> Result<Self> {
        let frames = doc
            .nodes
            .iter()
            .map(|pairs| StiefelFrame::new(pairs_to_matrix(doc.n, doc.m, pairs)?))
            .collect::<Result<Vec<_>>>()?;
        GridField::new(doc.grid, frames, doc.provenance)
    }
}

/// Jets (X with derivatives) on every node of a grid.
#[derive(Clone, Debug)]
pub struct JetField {
    grid: LightConeGrid,
    jets: Vec<FieldJet>,
    exact: bool,
}

impl JetField {
    pub(crate) fn from_exact(grid: LightConeGrid, jets: Vec<FieldJet>) -> Self {
        JetField { grid, jets, exact: true }
    }

    pub fn grid(&self) -> &LightConeGrid {
        &self.grid
    }

    pub fn jets(&self) -> &[FieldJet] {
        &self.jets
    }

    pub fn jet(&self, i: usize, j: usize) -> &FieldJet {
        &self.jets[self.grid.index(i, j)]
    }

    /// True when derivatives are closed-form rather than finite differences.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// Width of the boundary band whose derivatives use one-sided stencils
    /// (zero for exact jets).
    pub fn boundary_band(&self) -> usize {
        usize::from(!self.exact)
    }

    pub fn n(&self) -> usize {
        self.jets[0].n()
    }

    pub fn m(&self) -> usize {
        self.jets[0].m()
    }

    pub fn to_grid_field(&self, provenance: Provenance) -> Result<GridField> {
        GridField::new(self.grid, self.jets.iter().map(|j| j.frame().clone()).collect(), provenance)
    }

    /// Per-node `max(|∂_R J_L|, |∂_L J_R|)`. Exact jets use the closed-form
    /// derivative; otherwise the currents are differenced across the grid.
    pub fn current_drift(&self) -> Result<Vec<f64>> {
        if self.exact {
            return self.jets.iter().map(|j| current_derivatives(j).map(|(a, b)| a.abs().max(b.abs()))).collect();
        }
        let (jl, jr): (Vec<f64>, Vec<f64>) = self.jets.iter().map(|j| {
            let c = currents(j);
            (c.left, c.right)
        }).unzip();
        let d_jl = first_derivative(&self.grid, &jl, Axis::R)?;
        let d_jr = first_derivative(&self.grid, &jr, Axis::L)?;
        Ok(d_jl.iter().zip(&d_jr).map(|(a, b)| a.abs().max(b.abs())).collect())
    }
}
