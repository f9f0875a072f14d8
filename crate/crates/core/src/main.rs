use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sigma_surfaces::cli_io::{exit_code_for, run, Command, ExperimentConfig, Overrides};
use sigma_surfaces::Error;

/// Grassmannian sigma-model solutions and the surfaces they induce in su(N).
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Check residuals against the configured tolerances (exit 4 on failure).
    Verify(Common),
    /// Build or solve the field and write it as JSON.
    Solve(Common),
    /// Integrate the surface and write the mesh.
    Surface(Common),
    /// Metric, curvature and mean curvature per node.
    Geometry(Common),
    /// Moving frames, Gauss–Weingarten matrices and the compatibility residual.
    Frame(Common),
    /// Run every analysis listed in the config.
    Export(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Grid override: nL,nR,hL,hR.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize, f64, f64)>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(usize, usize, f64, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [nl, nr, hl, hr] = parts.as_slice() else {
        return Err(format!("expected nL,nR,hL,hR, got `{s}`"));
    };
    let int = |x: &str| x.parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    let float = |x: &str| x.parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((int(nl)?, int(nr)?, float(hl)?, float(hr)?))
}

fn execute(command: Command, args: &Common) -> Result<i32, Error> {
    let overrides = Overrides { grid: args.grid, seed: args.seed, output: args.out.clone() };
    let config = ExperimentConfig::load(&args.config)?.apply(&overrides)?;
    let outcome = run(&config, command)?;
    let report = &outcome.report;
    println!("{} {} -> {}", report.command, report.source, outcome.output.display());
    for check in &report.checks {
        println!("{} {} = {:.3e} ({})", if check.passed { "PASS" } else { "FAIL" }, check.name, check.value, check.condition);
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Sub::Verify(a) => (Command::Verify, a),
        Sub::Solve(a) => (Command::Solve, a),
        Sub::Surface(a) => (Command::Surface, a),
        Sub::Geometry(a) => (Command::Geometry, a),
        Sub::Frame(a) => (Command::Frame, a),
        Sub::Export(a) => (Command::Export, a),
    };
    let code = match execute(command, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    };
    ExitCode::from(code as u8)
}
