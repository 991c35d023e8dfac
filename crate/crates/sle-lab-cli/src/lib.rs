//! Command-line front end of `sle-lab`.
//!
//! [`run`] parses the arguments, loads the configuration, executes one
//! subcommand and maps the result to an exit code: `0` when every check
//! passes, `1` for failed checks or numerical errors (a JSON error record is
//! written next to the reports), `2` for usage and configuration errors.

// `!(x > 0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use clap::{Parser, Subcommand};
use config::RunConfig;
use serde_json::json;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

/// Exit code of a run whose checks all passed.
pub const EXIT_OK: i32 = 0;
/// Exit code of failed checks and numerical errors.
pub const EXIT_FAILURE: i32 = 1;
/// Exit code of malformed invocations and configurations.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sle-lab", version, about = "Coulomb gas identities, SLE simulation and martingale verification")]
pub struct Cli {
    /// TOML configuration file (unknown keys are rejected).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for path-parallel Monte Carlo.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Output directory for CSV and JSON artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Möbius invariance of Coulomb gas correlations on random neutral divisors.
    CheckCoulomb {
        /// Number of random divisors.
        #[arg(long, value_name = "N")]
        random: Option<usize>,
    },
    /// Null-vector equation of the partition function on random backgrounds.
    CheckNullvector {
        /// Random configurations per (κ, geometry, direction).
        #[arg(long, value_name = "N")]
        random: Option<usize>,
    },
    /// BPZ–Cardy equation of vertex observables on random configurations.
    CheckBpzCardy {
        /// Random configurations per (κ, geometry, direction).
        #[arg(long, value_name = "N")]
        random: Option<usize>,
    },
    /// Simulates driving paths and writes the Loewner flow and observables as CSV.
    Simulate {
        /// Number of paths.
        #[arg(long, value_name = "N")]
        paths: Option<usize>,
    },
    /// Monte Carlo martingale test of an observable.
    VerifyMartingale {
        /// Number of paths.
        #[arg(long, value_name = "N")]
        paths: Option<usize>,
    },
    /// Decay-rate regression of the boundary derivative observable.
    VerifyExponent {
        /// Number of paths.
        #[arg(long, value_name = "N")]
        paths: Option<usize>,
    },
    /// Slit-avoidance probability of chordal SLE(8/3) against the restriction formula.
    VerifyRestriction {
        /// Number of paths.
        #[arg(long, value_name = "N")]
        paths: Option<usize>,
    },
    /// Evaluates the Virasoro recursion at points e^{iθ} on the unit circle.
    VirasoroRecursion {
        /// Comma-separated angles θ.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_name = "θ,...")]
        angles: Vec<f64>,
        /// κ (defaults to the configuration, 8/3).
        #[arg(long)]
        kappa: Option<f64>,
    },
    /// Writes the fully resolved configuration to `<out>/config.toml`.
    Export,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckCoulomb { .. } => "check-coulomb",
            Command::CheckNullvector { .. } => "check-nullvector",
            Command::CheckBpzCardy { .. } => "check-bpz-cardy",
            Command::Simulate { .. } => "simulate",
            Command::VerifyMartingale { .. } => "verify-martingale",
            Command::VerifyExponent { .. } => "verify-exponent",
            Command::VerifyRestriction { .. } => "verify-restriction",
            Command::VirasoroRecursion { .. } => "virasoro-recursion",
            Command::Export => "export",
        }
    }
}

/// Failures of a run, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed configuration or request (exit 2).
    #[error("{0}")]
    Usage(String),
    /// Numerical failure inside the library (exit 1).
    #[error(transparent)]
    Numerical(sle_lab::Error),
    /// Artifacts could not be written (exit 1).
    #[error("{0}")]
    Io(String),
}

impl From<sle_lab::Error> for CliError {
    fn from(e: sle_lab::Error) -> Self {
        match e {
            sle_lab::Error::Config(m) => CliError::Usage(m),
            other => CliError::Numerical(other),
        }
    }
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let cfg = match resolve_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let out = cfg.output_dir.clone();
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_FAILURE;
    }
    let result = match cfg.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli.command, &cfg, &out)),
            Err(e) => Err(CliError::Io(format!("cannot start the thread pool: {e}"))),
        },
        None => execute(&cli.command, &cfg, &out),
    };
    match result {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            if let Some((name, report)) = &outcome.report {
                if let Err(e) = write_json(&out.join(name), report) {
                    eprintln!("error: {e}");
                    return EXIT_FAILURE;
                }
            }
            if outcome.pass {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(CliError::Usage(m)) => {
            eprintln!("error: invalid configuration: {m}");
            EXIT_USAGE
        }
        Err(e) => {
            let name = cli.command.name();
            eprintln!("error: {name}: {e}");
            let record = json!({ "command": name, "error": e.to_string(), "kind": error_kind(&e) });
            if let Err(w) = write_json(&out.join(format!("{name}.error.json")), &record) {
                eprintln!("error: {w}");
            }
            EXIT_FAILURE
        }
    }
}

fn error_kind(e: &CliError) -> &'static str {
    match e {
        CliError::Usage(_) => "usage",
        CliError::Numerical(_) => "numerical",
        CliError::Io(_) => "io",
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, config::ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = Some(threads);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    match &cli.command {
        Command::CheckCoulomb { random: Some(n) } => cfg.coulomb.random = *n,
        Command::CheckNullvector { random: Some(n) } => cfg.nullvector.random = *n,
        Command::CheckBpzCardy { random: Some(n) } => cfg.bpz_cardy.random = *n,
        Command::Simulate { paths: Some(n) } => cfg.simulate.n_paths = *n,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(command: &Command, cfg: &RunConfig, out: &Path) -> Result<commands::Outcome, CliError> {
    match command {
        Command::CheckCoulomb { .. } => commands::check_coulomb(cfg),
        Command::CheckNullvector { .. } => commands::check_nullvector(cfg),
        Command::CheckBpzCardy { .. } => commands::check_bpz_cardy(cfg),
        Command::Simulate { .. } => commands::simulate(cfg, out),
        Command::VerifyMartingale { paths } => commands::verify_martingale(cfg, *paths),
        Command::VerifyExponent { paths } => commands::verify_exponent(cfg, *paths),
        Command::VerifyRestriction { paths } => commands::verify_restriction(cfg, *paths),
        Command::VirasoroRecursion { angles, kappa } => commands::virasoro_recursion(cfg, angles, *kappa),
        Command::Export => commands::export(cfg, out),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    std::fs::write(path, text + "\n").map_err(|e| format!("cannot write {}: {e}", path.display()))
}
