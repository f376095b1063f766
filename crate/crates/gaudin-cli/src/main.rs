//! `gaudin`: batch front end for the spin-1/2 XYZ central-spin solver.
//!
//! Subcommands: `validate` (integrability residuals), `solve` (single
//! parameter point), `sweep` (parameter sweeps), `oracle` (exact-
//! diagonalization comparison). Exit codes: 0 success, 1 validation
//! failure, 2 solver failure, 3 I/O failure.

mod config;
mod emit;
mod run;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{OutputFormat, RunConfig};
use emit::OutputRow;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gaudin",
    about = "Integrable spin-1/2 XYZ central-spin models: conserved-charge eigenvalues and local observables",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output path (overrides the config; stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format: csv or json (overrides the config).
    #[arg(long, global = true)]
    format: Option<String>,

    /// RNG seed for the oracle's mixing combination (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Newton residual tolerance (overrides the config).
    #[arg(long = "tol-newton", global = true)]
    tol_newton: Option<f64>,

    /// Worker threads for sweeps and oracle runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Report the integrability constraint residuals of a configured model.
    Validate { config: PathBuf },
    /// Solve the configured parameter point for the selected states.
    Solve { config: PathBuf },
    /// Sweep a parameter and emit one row per (value, state, site).
    Sweep { config: PathBuf },
    /// Compare the solver against dense exact diagonalization.
    Oracle { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gaudin: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }

    let (config_path, command) = match &cli.command {
        Command::Validate { config } => (config.clone(), "validate"),
        Command::Solve { config } => (config.clone(), "solve"),
        Command::Sweep { config } => (config.clone(), "sweep"),
        Command::Oracle { config } => (config.clone(), "oracle"),
    };
    let mut cfg = load_config(&config_path)?;
    apply_overrides(&mut cfg, &cli)?;

    match command {
        "validate" => {
            let report = run::run_validate(&cfg)?;
            print!("{report}");
            Ok(())
        }
        "solve" => {
            let rows = run::run_solve(&cfg)?;
            let failed = rows.iter().any(|r| !r.error.is_empty());
            emit_rows(&cfg, &rows)?;
            if failed {
                return Err(CliError::Solver(
                    "one or more states failed to solve (see error column)".into(),
                ));
            }
            Ok(())
        }
        "sweep" => {
            // Per-point failures are recorded in the error column; the sweep
            // itself still succeeds.
            let rows = run::run_sweep(&cfg)?;
            emit_rows(&cfg, &rows)
        }
        "oracle" => {
            if !cfg.oracle {
                return Err(CliError::Validation(
                    "this config has oracle = off; set `oracle = on` to allow the dense comparison"
                        .into(),
                ));
            }
            let (report, rows) = run::run_oracle(&cfg)?;
            print!("{report}");
            if cfg.out.is_some() {
                emit_rows(&cfg, &rows)?;
            }
            if !report.passed() {
                return Err(CliError::Solver(
                    "oracle comparison exceeded its tolerances".into(),
                ));
            }
            Ok(())
        }
        _ => unreachable!(),
    }
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    RunConfig::parse(&text)
}

fn apply_overrides(cfg: &mut RunConfig, cli: &Cli) -> Result<(), CliError> {
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(format) = &cli.format {
        cfg.format = format
            .parse::<OutputFormat>()
            .map_err(CliError::Validation)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = cli.tol_newton {
        if tol <= 0.0 {
            return Err(CliError::Validation("--tol-newton must be positive".into()));
        }
        cfg.tolerances.newton_tol = tol;
    }
    Ok(())
}

fn emit_rows(cfg: &RunConfig, rows: &[OutputRow]) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => {
            let file = fs::File::create(path)
                .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))?;
            let mut writer = std::io::BufWriter::new(file);
            write_rows(&mut writer, cfg.format, rows)?;
            writer
                .flush()
                .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_rows(&mut lock, cfg.format, rows)
        }
    }
}

fn write_rows<W: Write>(w: W, format: OutputFormat, rows: &[OutputRow]) -> Result<(), CliError> {
    match format {
        OutputFormat::Csv => emit::write_csv(w, rows),
        OutputFormat::Json => emit::write_json(w, rows),
    }
}
