//! `goursat-frames`: analyze distributions, compute curve invariants, verify fixtures.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::{CliError, EXIT_INVALID, EXIT_OK};

const DEFAULT_SEED: u64 = 0x5eed_f1a6;
const SEED_ENV: &str = "GOURSAT_FRAMES_SEED";

#[derive(Parser)]
#[command(name = "goursat-frames", version, about)]
struct Cli {
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Relative singular-value threshold for rank decisions, in (0, 1e-2).
    #[arg(long, global = true, default_value_t = 1e-8)]
    tolerance: f64,
    /// Fixed jet order instead of the automatic choice.
    #[arg(long, global = true)]
    jet_order: Option<usize>,
    /// Maximum number of jet coefficients per scalar.
    #[arg(long, global = true)]
    jet_budget: Option<usize>,
    /// Samples per curve.
    #[arg(long, global = true, default_value_t = 10)]
    samples: usize,
    /// Seed for every random choice; falls back to GOURSAT_FRAMES_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Derived flag, signature and Goursat certificate of a distribution.
    Analyze(commands::AnalyzeArgs),
    /// Curvature and torsion of a curve along its domain.
    Invariants(commands::InvariantsArgs),
    /// Check a registered fixture against its expected facts.
    Verify(commands::VerifyArgs),
    /// Print a fixture as a distribution or metric document.
    Export(commands::ExportArgs),
}

/// Validated settings shared by all commands.
pub struct RunConfig {
    pub tolerance: f64,
    pub jet_order: Option<usize>,
    pub samples: usize,
    pub seed: u64,
    pub format: Format,
}

impl RunConfig {
    fn from_args(a: &RunArgs) -> Result<Self, CliError> {
        if !(a.tolerance > 0.0 && a.tolerance < 1e-2) {
            return Err(CliError::invalid(format!(
                "tolerance {} outside (0, 1e-2)",
                a.tolerance
            )));
        }
        if a.samples == 0 {
            return Err(CliError::invalid("sample count must be at least 1"));
        }
        let seed = match a.seed {
            Some(s) => s,
            None => match std::env::var(SEED_ENV) {
                Ok(v) => v.trim().parse().map_err(|_| {
                    CliError::invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
                })?,
                Err(_) => DEFAULT_SEED,
            },
        };
        Ok(RunConfig {
            tolerance: a.tolerance,
            jet_order: a.jet_order,
            samples: a.samples,
            seed,
            format: a.format,
        })
    }

    pub fn flag_config(&self) -> goursat_frames::distribution::FlagConfig {
        let mut cfg = goursat_frames::distribution::FlagConfig::default();
        cfg.policy.tol_rel = self.tolerance;
        cfg.jet_order = self.jet_order;
        cfg.seed = self.seed;
        cfg
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let cfg = RunConfig::from_args(&cli.run)?;
    if let Some(b) = cli.run.jet_budget {
        goursat_frames::jets::set_jet_budget(b);
    }
    let (text, code) = match &cli.command {
        Command::Analyze(a) => commands::analyze(a, &cfg)?,
        Command::Invariants(a) => commands::invariants(a, &cfg)?,
        Command::Verify(a) => commands::verify(a, &cfg)?,
        Command::Export(a) => commands::export(a)?,
    };
    match &cli.run.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
