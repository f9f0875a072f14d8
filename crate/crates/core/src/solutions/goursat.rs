//! Characteristic initial value problem on a light-cone grid.
//!
//! Data are prescribed on the two characteristics through the grid origin:
//! `X(ξ_L, ξ_R0)` (the left-moving data) and `X(ξ_L0, ξ_R)`. Each cell is
//! closed with the second-order rectangle rule
//! `X₁₁ = X₁₀ + X₀₁ − X₀₀ + h_L h_R F(cell centre)`, F being the mixed
//! derivative fixed by the field equation, solved by fixed-point iteration
//! and followed by a polar retraction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_model::{mixed_derivative_from_field_equation, StiefelFrame};
use crate::linalg::{self, frob, ComplexMatrix};
use crate::solutions::catalog::ClosedFormField;
use crate::solutions::grid::{GridField, LightConeGrid, Provenance};

/// Allowed mismatch of the two data curves at the corner.
pub const CORNER_TOLERANCE: f64 = 1e-10;

/// Smallest singular value below which a retraction is refused.
pub const RETRACTION_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoursatOptions {
    /// Stop the per-cell iteration once an update moves X by less than this
    /// (relative to ‖X‖).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GoursatOptions {
    fn default() -> Self {
        GoursatOptions { tolerance: 1e-15, max_iterations: 100 }
    }
}

/// Solve on `grid` from data on `ξ_R = ξ_R0` (`left`, a function of ξ_L) and on
/// `ξ_L = ξ_L0` (`right`, a function of ξ_R).
pub fn goursat_solve(
    left: impl Fn(f64) -> Result<StiefelFrame>,
    right: impl Fn(f64) -> Result<StiefelFrame>,
    grid: &LightConeGrid,
    options: &GoursatOptions,
    provenance: Provenance,
) -> Result<GridField> {
    grid.validate()?;
    let corner_l = left(grid.xi_l0)?;
    let corner_r = right(grid.xi_r0)?;
    if corner_l.matrix().shape() != corner_r.matrix().shape() {
        return Err(Error::mismatch(
            format!("{}x{} data", corner_l.n(), corner_l.m()),
            format!("{}x{}", corner_r.n(), corner_r.m()),
        ));
    }
    let deviation = frob(&(corner_l.matrix() - corner_r.matrix()));
    if deviation > CORNER_TOLERANCE {
        return Err(Error::CornerMismatch { deviation });
    }

    let mut nodes: Vec<Option<ComplexMatrix>> = vec![None; grid.len()];
    nodes[grid.index(0, 0)] = Some(corner_l.matrix().clone());
    for i in 1..grid.n_l {
        nodes[grid.index(i, 0)] = Some(left(grid.xi_l(i))?.into_matrix());
    }
    for j in 1..grid.n_r {
        nodes[grid.index(0, j)] = Some(right(grid.xi_r(j))?.into_matrix());
    }

    for j in 1..grid.n_r {
        for i in 1..grid.n_l {
            let get = |i: usize, j: usize| nodes[grid.index(i, j)].as_ref().expect("filled in sweep order");
            let x11 = step(get(i - 1, j - 1), get(i, j - 1), get(i - 1, j), grid, options)
                .ok_or(Error::Divergence { i, j, xi_l: grid.xi_l(i), xi_r: grid.xi_r(j) })?;
            let (retracted, sigma_min) = linalg::polar_factor(&x11);
            if sigma_min <= RETRACTION_FLOOR {
                return Err(Error::RetractionFailure { i, j, sigma_min });
            }
            nodes[grid.index(i, j)] = Some(retracted);
        }
    }

    let frames = nodes
        .into_iter()
        .map(|x| StiefelFrame::new(x.expect("every node visited")))
        .collect::<Result<Vec<_>>>()?;
    GridField::new(*grid, frames, provenance)
}

/// Close one cell; `None` if the iteration does not settle.
fn step(x00: &ComplexMatrix, x10: &ComplexMatrix, x01: &ComplexMatrix, grid: &LightConeGrid, options: &GoursatOptions) -> Option<ComplexMatrix> {
    let (hl, hr) = (grid.h_l, grid.h_r);
    let base = x10 + x01 - x00;
    let mut x11 = base.clone();
    let mut last = f64::INFINITY;
    for _ in 0..options.max_iterations {
        let centre = (x00 + x10 + x01 + &x11).scale(0.25);
        let a = (x10 - x00 + &x11 - x01).scale(0.5 / hl);
        let b = (x01 - x00 + &x11 - x10).scale(0.5 / hr);
        let next = &base + mixed_derivative_from_field_equation(&centre, &a, &b).scale(hl * hr);
        if !linalg::is_finite(&next) {
            return None;
        }
        let delta = frob(&(&next - &x11));
        x11 = next;
        let scale = 1.0 + frob(&x11);
        if delta <= options.tolerance * scale {
            return Some(x11);
        }
        // rounding floor: the update stopped shrinking at machine precision
        if delta >= last && delta <= 1e-13 * scale {
            return Some(x11);
        }
        last = delta;
    }
    (last <= 1e-12 * (1.0 + frob(&x11))).then_some(x11)
}

/// Boundary data read off a closed-form field, e.g. to reproduce a catalog
/// solution with the solver.
pub fn solve_from_closed_form(field: &ClosedFormField, grid: &LightConeGrid, options: &GoursatOptions) -> Result<GridField> {
    let (l0, r0) = (grid.xi_l0, grid.xi_r0);
    goursat_solve(
        |l| Ok(field.jet(l, r0).frame().clone()),
        |r| Ok(field.jet(l0, r).frame().clone()),
        grid,
        options,
        Provenance::Solved { description: format!("goursat from {}", field.name()), seed: None },
    )
}

/// Parameters of random smooth initial data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    /// Number of Fourier modes per curve.
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Size of the perturbation added to the corner frame.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Angular frequency of the fundamental mode.
    #[serde(default = "default_frequency")]
    pub frequency: f64,
}

fn default_modes() -> usize {
    3
}

fn default_amplitude() -> f64 {
    0.3
}

fn default_frequency() -> f64 {
    2.0
}

impl InitialDataSpec {
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        InitialDataSpec { n, m, seed, modes: default_modes(), amplitude: default_amplitude(), frequency: default_frequency() }
    }
}

/// Two trigonometric-polynomial curves through a common corner frame,
/// retracted onto the Stiefel manifold.
///
/// Each curve is `X0 + a Σ_k (A_k sin(kωt) + B_k (1 − cos(kωt)))/k²` with
/// unit-norm random A_k, B_k and t measured from the corner. Since
/// `Σ 2/k² < 3.3`, amplitudes below 0.3 keep the curve away from rank loss.
#[derive(Clone, Debug)]
pub struct RandomInitialData {
    spec: InitialDataSpec,
    x0: ComplexMatrix,
    left_modes: Vec<(ComplexMatrix, ComplexMatrix)>,
    right_modes: Vec<(ComplexMatrix, ComplexMatrix)>,
}

impl RandomInitialData {
    pub fn generate(spec: InitialDataSpec) -> Result<Self> {
        if spec.m == 0 || spec.m >= spec.n {
            return Err(Error::InvalidDimension(format!("need 1 <= m < N, got N = {}, m = {}", spec.n, spec.m)));
        }
        if !(spec.amplitude.is_finite() && spec.amplitude >= 0.0 && spec.frequency.is_finite()) {
            return Err(Error::Config("initial data amplitude and frequency must be finite".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let x0 = StiefelFrame::random(spec.n, spec.m, &mut rng)?.into_matrix();
        let mut unit = || {
            let g = linalg::random_gaussian(spec.n, spec.m, &mut rng);
            let norm = frob(&g);
            g.unscale(norm)
        };
        let mut modes = |count: usize| (0..count).map(|_| (unit(), unit())).collect::<Vec<_>>();
        let left_modes = modes(spec.modes);
        let right_modes = modes(spec.modes);
        Ok(RandomInitialData { spec, x0, left_modes, right_modes })
    }

    pub fn spec(&self) -> &InitialDataSpec {
        &self.spec
    }

    fn curve(&self, modes: &[(ComplexMatrix, ComplexMatrix)], t: f64) -> Result<StiefelFrame> {
        let mut y = self.x0.clone();
        for (k, (a, b)) in modes.iter().enumerate() {
            let k = (k + 1) as f64;
            let w = k * self.spec.frequency * t;
            let s = self.spec.amplitude / (k * k);
            y += a.scale(s * w.sin()) + b.scale(s * (1.0 - w.cos()));
        }
        StiefelFrame::retract(&y)
    }

    /// Data on `ξ_R = ξ_R0` at parameter distance `t` from the corner.
    pub fn left(&self, t: f64) -> Result<StiefelFrame> {
        self.curve(&self.left_modes, t)
    }

    /// Data on `ξ_L = ξ_L0` at parameter distance `t` from the corner.
    pub fn right(&self, t: f64) -> Result<StiefelFrame> {
        self.curve(&self.right_modes, t)
    }

    pub fn solve(&self, grid: &LightConeGrid, options: &GoursatOptions) -> Result<GridField> {
        let (l0, r0) = (grid.xi_l0, grid.xi_r0);
        goursat_solve(
            |l| self.left(l - l0),
            |r| self.right(r - r0),
            grid,
            options,
            Provenance::Solved {
                description: format!("goursat from random data (N = {}, m = {})", self.spec.n, self.spec.m),
                seed: Some(self.spec.seed),
            },
        )
    }
}
