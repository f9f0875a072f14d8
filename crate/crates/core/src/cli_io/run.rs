//! Runs an experiment: builds the field on every requested grid, runs the
//! analyses, writes the artifacts and the summary report.

use std::path::PathBuf;

use serde::Serialize;

use crate::error::Result;
use crate::field_model::el_residual;
use crate::frame::FrameField;
use crate::geometry::GeometryField;
use crate::immersion::{compare_paths, loop_closedness_residual, weierstrass_integrate, TangentField};
use crate::linalg;
use crate::solutions::{ClosedFormField, GridField, JetField, LightConeGrid, RandomInitialData};
use crate::sun_algebra::AlgebraElement;

use super::config::{Analysis, ExperimentConfig, SolutionSource};
use super::manifest::{ArtifactWriter, ManifestEntry};

/// What the command line asked for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    /// Residual checks; failing checks give a distinct exit status.
    Verify,
    /// Only the solution itself.
    Solve,
    Surface,
    Geometry,
    Frame,
    /// Every analysis listed in the config.
    Export,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Solve => "solve",
            Command::Surface => "surface",
            Command::Geometry => "geometry",
            Command::Frame => "frame",
            Command::Export => "export",
        }
    }

    fn analyses(&self, config: &ExperimentConfig) -> Vec<Analysis> {
        match self {
            Command::Verify => vec![Analysis::Verify],
            Command::Solve => vec![],
            Command::Surface => vec![Analysis::Surface],
            Command::Geometry => vec![Analysis::Geometry],
            Command::Frame => vec![Analysis::Frame],
            Command::Export => config.analyses(),
        }
    }
}

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Clone, Debug, Serialize)]
pub struct FieldStats {
    pub el_max: f64,
    pub constraint_max: f64,
    /// Largest `|∂_R J_L|`, `|∂_L J_R|`.
    pub current_drift_max: f64,
    /// Largest plaquette circulation per unit area of the tangent form.
    pub closedness: f64,
    /// Statistics skip this many boundary rows (one-sided differences).
    pub margin: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityStats {
    pub regular_nodes: usize,
    pub total_nodes: usize,
    pub det_g_min: f64,
    pub det_g_max: f64,
    /// `regular`, `degenerate` or `mixed`.
    pub classification: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SurfaceStats {
    /// Largest distance between row-first and column-first integration.
    pub path_difference: f64,
    /// Largest amount by which that distance exceeds the summed plaquette
    /// circulations between the two paths.
    pub path_excess: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GeometryStats {
    pub curvature_nodes: usize,
    pub k_metric_max_abs: Option<f64>,
    pub k_gauss_max_abs: Option<f64>,
    pub k_discrepancy_max: Option<f64>,
    pub h_norm_max: Option<f64>,
    pub mixed_tangential_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FrameStats {
    pub normal_count: Option<usize>,
    pub orthonormality_max: Option<f64>,
    pub tangency_max: Option<f64>,
    pub antisymmetry_max: Option<f64>,
    pub gcr_max: Option<f64>,
    pub gcr_rms: Option<f64>,
    pub evaluated_nodes: usize,
    pub flagged_nodes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridReport {
    pub grid: LightConeGrid,
    pub field: FieldStats,
    pub regularity: RegularityStats,
    pub surface: Option<SurfaceStats>,
    pub geometry: Option<GeometryStats>,
    pub frame: Option<FrameStats>,
}

/// One quantity across the grids and the observed order between neighbours.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub quantity: String,
    pub values: Vec<Option<f64>>,
    pub orders: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable pass condition.
    pub condition: String,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub source: String,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub grids: Vec<GridReport>,
    pub convergence: Vec<ConvergenceRow>,
    pub checks: Vec<Check>,
    pub verified: Option<bool>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub manifest: Vec<ManifestEntry>,
    pub output: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match self.report.verified {
            Some(false) => EXIT_CHECK_FAILED,
            _ => EXIT_SUCCESS,
        }
    }
}

/// Exit status for an error raised by [`run`] or while loading the config.
pub fn exit_code_for(error: &crate::Error) -> i32 {
    if error.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

enum Built {
    Closed(ClosedFormField),
    Solved(RandomInitialData),
}

impl Built {
    fn on(&self, grid: &LightConeGrid, config: &ExperimentConfig) -> Result<(GridField, JetField)> {
        match self {
            Built::Closed(f) => Ok((f.grid_field(grid)?, f.sample(grid))),
            Built::Solved(data) => {
                let field = data.solve(grid, &config.goursat)?;
                let jets = field.finite_difference_jets()?;
                Ok((field, jets))
            }
        }
    }

    fn name(&self) -> String {
        match self {
            Built::Closed(f) => f.name().to_string(),
            Built::Solved(data) => {
                let s = data.spec();
                format!("goursat(N={}, m={}, seed={})", s.n, s.m, s.seed)
            }
        }
    }
}

fn max_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.reduce(f64::max)
}

fn interior_values<'a, T: Copy + 'a>(grid: &'a LightConeGrid, values: &'a [T], margin: usize) -> impl Iterator<Item = T> + 'a {
    grid.indices().filter(move |&(i, j)| grid.is_interior(i, j, margin)).map(move |(i, j)| values[grid.index(i, j)])
}

fn field_stats(jets: &JetField) -> Result<FieldStats> {
    let grid = jets.grid();
    let margin = jets.boundary_band();
    let el: Vec<f64> = jets.jets().iter().map(el_residual).collect::<Result<_>>()?;
    let drift = jets.current_drift()?;
    let constraint: Vec<f64> = jets.jets().iter().map(|j| linalg::unitarity_defect(j.x())).collect();
    let tangents = TangentField::from_jets(jets);
    Ok(FieldStats {
        el_max: max_of(interior_values(grid, &el, margin)).unwrap_or(0.0),
        constraint_max: constraint.iter().copied().fold(0.0, f64::max),
        current_drift_max: max_of(interior_values(grid, &drift, margin)).unwrap_or(0.0),
        closedness: loop_closedness_residual(&tangents)?,
        margin,
    })
}

fn regularity_stats(geometry_metrics: impl Iterator<Item = (bool, f64)>) -> RegularityStats {
    let (mut regular, mut total, mut lo, mut hi) = (0, 0, f64::INFINITY, f64::NEG_INFINITY);
    for (is_regular, det) in geometry_metrics {
        total += 1;
        regular += usize::from(is_regular);
        lo = lo.min(det);
        hi = hi.max(det);
    }
    let classification = match regular {
        0 => "degenerate",
        r if r == total => "regular",
        _ => "mixed",
    };
    RegularityStats { regular_nodes: regular, total_nodes: total, det_g_min: lo, det_g_max: hi, classification: classification.into() }
}

fn geometry_stats(g: &GeometryField, margin: usize) -> GeometryStats {
    let grid = &g.grid;
    let nodes: Vec<usize> = grid.indices().filter(|&(i, j)| grid.is_interior(i, j, margin)).map(|(i, j)| grid.index(i, j)).collect();
    let pairs: Vec<(f64, f64)> = nodes.iter().filter_map(|&k| Some((g.k_metric[k]?, g.k_gauss[k]?))).collect();
    GeometryStats {
        curvature_nodes: pairs.len(),
        k_metric_max_abs: max_of(pairs.iter().map(|p| p.0.abs())),
        k_gauss_max_abs: max_of(pairs.iter().map(|p| p.1.abs())),
        k_discrepancy_max: max_of(pairs.iter().map(|p| (p.0 - p.1).abs())),
        h_norm_max: max_of(nodes.iter().filter_map(|&k| g.h_norm[k])),
        mixed_tangential_max: nodes.iter().map(|&k| g.mixed_tangential[k]).fold(0.0, f64::max),
    }
}

fn frame_stats(f: &FrameField, margin: usize) -> FrameStats {
    let grid = &f.grid;
    let nodes: Vec<usize> = grid.indices().filter(|&(i, j)| grid.is_interior(i, j, margin)).map(|(i, j)| grid.index(i, j)).collect();
    let frames: Vec<_> = nodes.iter().filter_map(|&k| f.frames[k].as_ref()).collect();
    let gcr: Vec<f64> = nodes.iter().filter(|&&k| !f.flagged[k]).filter_map(|&k| f.gcr[k]).collect();
    FrameStats {
        normal_count: frames.first().map(|fr| fr.normals.len()),
        orthonormality_max: max_of(frames.iter().map(|fr| fr.orthonormality_defect())),
        tangency_max: max_of(frames.iter().map(|fr| fr.tangency_defect())),
        antisymmetry_max: max_of(nodes.iter().filter_map(|&k| f.gw[k].as_ref().map(|g| g.antisymmetry_defect))),
        gcr_max: max_of(gcr.iter().copied()),
        gcr_rms: (!gcr.is_empty()).then(|| (gcr.iter().map(|x| x * x).sum::<f64>() / gcr.len() as f64).sqrt()),
        evaluated_nodes: gcr.len(),
        flagged_nodes: nodes.iter().filter(|&&k| f.flagged[k]).count(),
    }
}

/// Observed order `log2(e_k / e_{k+1})` between successive halvings.
pub fn observed_orders(values: &[Option<f64>]) -> Vec<Option<f64>> {
    values
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).log2()),
            _ => None,
        })
        .collect()
}

fn convergence_table(grids: &[GridReport]) -> Vec<ConvergenceRow> {
    type Getter = fn(&GridReport) -> Option<f64>;
    let rows: [(&str, Getter); 5] = [
        ("el_max", |g| Some(g.field.el_max)),
        ("current_drift_max", |g| Some(g.field.current_drift_max)),
        ("closedness", |g| Some(g.field.closedness)),
        ("k_discrepancy_max", |g| g.geometry.as_ref()?.k_discrepancy_max),
        ("gcr_rms", |g| g.frame.as_ref()?.gcr_rms),
    ];
    rows.iter()
        .map(|(name, get)| {
            let values: Vec<Option<f64>> = grids.iter().map(get).collect();
            ConvergenceRow { quantity: name.to_string(), orders: observed_orders(&values), values }
        })
        .filter(|row| row.values.iter().any(Option::is_some))
        .collect()
}

fn verification_checks(config: &ExperimentConfig, grids: &[GridReport], table: &[ConvergenceRow]) -> Vec<Check> {
    let mut checks = Vec::new();
    let el_tol = config.el_tolerance();
    for g in grids {
        let tag = format!("{}x{}", g.grid.n_l, g.grid.n_r);
        checks.push(Check {
            name: format!("constraint[{tag}]"),
            value: g.field.constraint_max,
            condition: format!("<= {:e}", config.tolerances.constraint),
            passed: g.field.constraint_max <= config.tolerances.constraint,
        });
        checks.push(Check {
            name: format!("el_residual[{tag}]"),
            value: g.field.el_max,
            condition: format!("<= {el_tol:e}"),
            passed: g.field.el_max <= el_tol,
        });
    }
    if matches!(config.source, SolutionSource::Goursat { .. }) {
        let last_order = table.iter().find(|r| r.quantity == "el_max").and_then(|r| r.orders.last().copied().flatten());
        if let Some(order) = last_order {
            checks.push(Check {
                name: "el_order".into(),
                value: order,
                condition: format!("within 2 +- {}", config.tolerances.order),
                passed: (order - 2.0).abs() <= config.tolerances.order,
            });
        }
    }
    checks
}

fn tag(grid: &LightConeGrid) -> String {
    format!("{}x{}", grid.n_l, grid.n_r)
}

/// Run `command` on `config`, writing into `config.output`.
pub fn run(config: &ExperimentConfig, command: Command) -> Result<RunOutcome> {
    config.validate()?;
    let analyses = command.analyses(config);
    let model = config.source.model();
    let built = match &config.source {
        SolutionSource::Catalog { entry } => Built::Closed(entry.build(config.seed)?),
        source => Built::Solved(RandomInitialData::generate(source.initial_data(config.seed).expect("goursat source"))?),
    };
    let mut writer = ArtifactWriter::create(&config.output)?;
    let mut reports = Vec::new();
    for (level, grid) in config.grids().iter().enumerate() {
        let (field, jets) = built.on(grid, config)?;
        writer.write(&format!("field_{}.json", tag(grid)), &field.to_json()?)?;
        let stats = field_stats(&jets)?;
        let margin = stats.margin;

        let geometry = GeometryField::from_jets(&jets)?;
        let regularity = regularity_stats(interior_values(grid, &geometry.metrics, margin).map(|m| (m.is_regular(), m.det_g)));

        let surface = if analyses.contains(&Analysis::Surface) {
            let scale = 1usize << level;
            let basepoint = (config.basepoint.0 * scale, config.basepoint.1 * scale);
            let mesh = weierstrass_integrate(&jets, basepoint, &AlgebraElement::zero(model.n))?;
            writer.write(&format!("surface_{}.json", tag(grid)), &mesh.to_json()?)?;
            writer.write(&format!("surface_{}.csv", tag(grid)), &mesh.to_csv())?;
            let cmp = compare_paths(&TangentField::from_jets(&jets), basepoint)?;
            Some(SurfaceStats { path_difference: cmp.max_difference, path_excess: cmp.max_excess })
        } else {
            None
        };

        let geometry = if analyses.contains(&Analysis::Geometry) {
            writer.write(&format!("geometry_{}.csv", tag(grid)), &geometry.to_csv())?;
            Some(geometry_stats(&geometry, margin + 1))
        } else {
            None
        };

        let frame = if analyses.contains(&Analysis::Frame) {
            let frames = match &built {
                Built::Closed(f) => FrameField::from_closed_form(f, grid, &config.frame)?,
                Built::Solved(_) => FrameField::from_jets(&jets, &config.frame)?,
            };
            writer.write(&format!("frame_{}.json", tag(grid)), &frames.to_json()?)?;
            writer.write(&format!("frame_{}.csv", tag(grid)), &frames.to_csv())?;
            Some(frame_stats(&frames, 2 * margin))
        } else {
            None
        };
        reports.push(GridReport { grid: *grid, field: stats, regularity, surface, geometry, frame });
    }

    let convergence = if reports.len() > 1 { convergence_table(&reports) } else { Vec::new() };
    let (checks, verified) = if analyses.contains(&Analysis::Verify) {
        let checks = verification_checks(config, &reports, &convergence);
        let ok = checks.iter().all(|c| c.passed);
        (checks, Some(ok))
    } else {
        (Vec::new(), None)
    };
    let report = Report {
        command: command.name().into(),
        source: built.name(),
        n: model.n,
        m: model.m,
        seed: config.seed,
        grids: reports,
        convergence,
        checks,
        verified,
    };
    writer.write("report.json", &serde_json::to_string_pretty(&report)?)?;
    let manifest = writer.finish()?;
    Ok(RunOutcome { report, manifest, output: config.output.clone() })
}
