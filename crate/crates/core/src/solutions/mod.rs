//! Exact solutions in closed form and numerical solutions on light-cone
//! grids.

mod catalog;
mod goursat;
mod grid;

pub use catalog::{
    balanced_torus, chiral_wave, constant_solution, direct_sum, direct_sum_fields, torus, unbalanced_torus, AnalyticSolution,
    ChiralCurve, ClosedFormField, LocalGauge, Reparametrization, CERTIFICATION_NODES, CERTIFICATION_TOLERANCE,
};
pub use goursat::{
    goursat_solve, solve_from_closed_form, GoursatOptions, InitialDataSpec, RandomInitialData, CORNER_TOLERANCE, RETRACTION_FLOOR,
};
pub(crate) use grid::{matrix_to_pairs, neighbour};
pub use grid::{chart_margin, first_derivative, first_derivative_stencil, second_derivative, Axis, GridField, JetField, LightConeGrid, Linear, Provenance};
