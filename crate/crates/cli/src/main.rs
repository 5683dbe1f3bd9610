//! `rasim` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rasim_core::config::{load_preset_with, load_scenario};
use rasim_core::engine::SlicerKind;
use rasim_core::scenario::{override_run, run_scenario, train_to_file, Scenario};
use rasim_core::slicer::{evaluate_objective, fixed_grid_slice, maxrect_slice, validate_constraints};
use rasim_core::traffic::BacklogState;
use rasim_core::{Error, UseMode};

#[derive(Parser)]
#[command(name = "rasim", version, about = "Sliced random-access simulator for mixed mMTC/URLLC traffic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write per-frame CSVs, a summary and a manifest.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Built-in sweep to run; values in --config override it.
        #[arg(long, value_parser = ["fig3", "fig4", "fig5"])]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        realizations: Option<u64>,
    },
    /// Train the backlog predictors on grant-free traces.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Destination model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the slicing plan for a given demand.
    Slice {
        #[arg(long)]
        config: PathBuf,
        /// URLLC demand; defaults to the URLLC population.
        #[arg(long)]
        k_u: Option<u64>,
        /// mMTC demand; defaults to the mMTC population.
        #[arg(long)]
        k_m: Option<u64>,
    },
    /// Check a configuration file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Failure tagged with its exit code.
struct Failure {
    code: u8,
    error: Error,
}

fn config_err(error: Error) -> Failure {
    Failure { code: 1, error }
}

fn runtime_err(error: Error) -> Failure {
    let code = if error.is_config_error() { 1 } else { 2 };
    Failure { code, error }
}

fn load(config: Option<&Path>, preset: Option<&str>) -> Result<Scenario, Failure> {
    match (preset, config) {
        (Some(p), c) => load_preset_with(p, c),
        (None, Some(c)) => load_scenario(c),
        (None, None) => Err(Error::config("config", "either --config or --preset is required")),
    }
    .map_err(config_err)
}

fn simulate(
    config: Option<&Path>,
    preset: Option<&str>,
    seed: Option<u64>,
    out: &Path,
    realizations: Option<u64>,
) -> Result<(), Failure> {
    let mut scenario = load(config, preset)?;
    override_run(&mut scenario, seed, realizations);
    scenario.validate().map_err(config_err)?;
    let results = run_scenario(&scenario, out).map_err(runtime_err)?;
    for r in &results {
        println!(
            "{:>3} {:<40} eta {:.4} +- {:.4}",
            r.point.index, r.point.label, r.steady.mean.eta, r.steady.se.eta
        );
    }
    println!("wrote {} point(s) to {}", results.len(), out.display());
    Ok(())
}

fn train(config: &Path, out: &Path) -> Result<(), Failure> {
    let scenario = load(Some(config), None)?;
    let outcome = train_to_file(&scenario, out).map_err(runtime_err)?;
    for (mode, s) in UseMode::ALL.iter().zip(&outcome.scores) {
        println!(
            "{mode}: train mse {:.3e}  validation mse {:.3e}  naive validation mse {:.3e}",
            s.train_mse, s.validation_mse, s.naive_validation_mse
        );
    }
    println!("models written to {}", out.display());
    Ok(())
}

fn slice(config: &Path, k_u: Option<u64>, k_m: Option<u64>) -> Result<(), Failure> {
    let cfg = load(Some(config), None)?.base;
    let k_u = k_u.unwrap_or(cfg.traffic.k_u);
    let k_m = k_m.unwrap_or(cfg.traffic.k_m);
    let plan = match cfg.slicer {
        SlicerKind::MaxRect => maxrect_slice(&cfg.grid, k_u, k_m),
        SlicerKind::Fixed { urllc } => fixed_grid_slice(&cfg.grid, urllc),
        SlicerKind::Pool { l_u, l_m } => {
            println!("pool slicer: {l_u} URLLC and {l_m} mMTC channels, no grid layout");
            return Ok(());
        }
    }
    .map_err(runtime_err)?;
    let backlog = BacklogState {
        active_u: k_u,
        active_m: k_m,
        ..Default::default()
    };
    print!("{}", plan.dump());
    println!();
    print!("{}", plan.render_ascii(cfg.grid.f, cfg.grid.s));
    println!(
        "channels {} (URLLC {}, mMTC {})  objective {:.4}",
        plan.len(),
        plan.l_u(),
        plan.l_m(),
        evaluate_objective(&plan, &cfg.grid, &backlog)
    );
    let violations = validate_constraints(&plan, &cfg.grid);
    for v in &violations {
        println!("violation: {v:?}");
    }
    Ok(())
}

fn validate(config: &Path) -> Result<(), Failure> {
    let scenario = load(Some(config), None)?;
    let points = scenario.points().map_err(config_err)?;
    println!("ok: scenario `{}` with {} point(s)", scenario.name, points.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate {
            config,
            preset,
            seed,
            out,
            realizations,
        } => simulate(config.as_deref(), preset.as_deref(), *seed, out, *realizations),
        Command::Train { config, out } => train(config, out),
        Command::Slice { config, k_u, k_m } => slice(config, *k_u, *k_m),
        Command::Validate { config } => validate(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
