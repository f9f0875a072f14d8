//! Configuration, orchestration and file output for the command-line tool.
//!
//! Exit statuses: 0 success, 2 invalid configuration, 3 numerical failure,
//! 4 a `verify` check failed.

mod config;
mod manifest;
mod run;

pub use config::{Analysis, CatalogEntry, ExperimentConfig, Model, Overrides, SolutionSource, Tolerances};
pub use manifest::{check_manifest, ArtifactWriter, ManifestEntry, MANIFEST_NAME};
pub use run::{
    exit_code_for, observed_orders, run, Check, Command, ConvergenceRow, FieldStats, FrameStats, GeometryStats, GridReport, RegularityStats,
    Report, RunOutcome, SurfaceStats, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_SUCCESS,
};
