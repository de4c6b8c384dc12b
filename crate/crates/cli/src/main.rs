//! Command-line front end for the oqslab experiments.
//!
//! Every subcommand reads its section from a TOML config file, runs the
//! experiment, and writes CSV outputs plus a `manifest.toml` (config echo,
//! seed, library version, wall time, status; emitted even on failure) into
//! the output directory. Identical config and seed produce byte-identical
//! CSVs on a fixed platform.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::ConfigFile;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "oqslab",
    version,
    about = "Collapse-model dynamics, master equations and non-Markovianity analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file with one section per experiment.
    #[arg(long)]
    config: PathBuf,
    /// Override the seed of the selected section.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory of the selected section.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for trajectory and campaign loops (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo ensemble of the localization jump process.
    #[command(name = "grw-mc")]
    GrwMc(RunArgs),
    /// Exact master-equation integration of a named generator.
    Lindblad(RunArgs),
    /// Trace-distance trajectory, derivative and revival measure.
    Blp(RunArgs),
    /// Complete positivity of intermediate maps along a family.
    Divisibility(RunArgs),
    /// Randomized verification of the distinguishability bound.
    #[command(name = "bound-campaign")]
    BoundCampaign(RunArgs),
    /// Write a dynamical-map family as CSV for external analysis.
    #[command(name = "export-family")]
    ExportFamily(RunArgs),
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::GrwMc(a)
            | Command::Lindblad(a)
            | Command::Blp(a)
            | Command::Divisibility(a)
            | Command::BoundCampaign(a)
            | Command::ExportFamily(a) => a,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::GrwMc(_) => "grw-mc",
            Command::Lindblad(_) => "lindblad",
            Command::Blp(_) => "blp",
            Command::Divisibility(_) => "divisibility",
            Command::BoundCampaign(_) => "bound-campaign",
            Command::ExportFamily(_) => "export-family",
        }
    }
}

fn load_config(args: &RunArgs) -> Result<ConfigFile, CliError> {
    let raw = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read config {:?}: {e}", args.config)))?;
    // toml errors carry line/column spans
    toml::from_str(&raw).map_err(|e| CliError::Config(format!("config parse error: {e}")))
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("config has no [{section}] section"))
}

fn prepare_out_dir(path: &std::path::Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Config(format!("cannot create output directory {path:?}: {e}")))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let args = command.args();
    if let Some(n) = args.threads {
        // tests may initialize the pool more than once in-process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let file = load_config(args)?;
    let name = command.name();
    match &command {
        Command::GrwMc(args) => {
            let mut cfg = file.grw_mc.ok_or_else(|| missing(name))?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = &args.out {
                cfg.out_dir = out.clone();
            }
            prepare_out_dir(&cfg.out_dir)?;
            let out = cfg.out_dir.clone();
            experiments::with_manifest(&out, name, cfg.seed, &cfg, || {
                cfg.validate()?;
                experiments::run_grw_mc(&cfg, &out)
            })
        }
        Command::Lindblad(args) => {
            let mut cfg = file.lindblad.ok_or_else(|| missing(name))?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = &args.out {
                cfg.out_dir = out.clone();
            }
            prepare_out_dir(&cfg.out_dir)?;
            let out = cfg.out_dir.clone();
            experiments::with_manifest(&out, name, cfg.seed, &cfg, || {
                cfg.validate()?;
                experiments::run_lindblad(&cfg, &out)
            })
        }
        Command::Blp(args) => {
            let mut cfg = file.blp.ok_or_else(|| missing(name))?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = &args.out {
                cfg.out_dir = out.clone();
            }
            prepare_out_dir(&cfg.out_dir)?;
            let out = cfg.out_dir.clone();
            experiments::with_manifest(&out, name, cfg.seed, &cfg, || {
                cfg.validate()?;
                experiments::run_blp(&cfg, &out)
            })
        }
        Command::Divisibility(args) => {
            let mut cfg = file.divisibility.ok_or_else(|| missing(name))?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = &args.out {
                cfg.out_dir = out.clone();
            }
            prepare_out_dir(&cfg.out_dir)?;
            let out = cfg.out_dir.clone();
            experiments::with_manifest(&out, name, cfg.seed, &cfg, || {
                cfg.validate()?;
                experiments::run_divisibility(&cfg, &out)
            })
        }
        Command::BoundCampaign(args) => {
            let mut cfg = file.bound_campaign.ok_or_else(|| missing(name))?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = &args.out {
                cfg.out_dir = out.clone();
            }
            prepare_out_dir(&cfg.out_dir)?;
            let out = cfg.out_dir.clone();
            experiments::with_manifest(&out, name, cfg.seed, &cfg, || {
                cfg.validate()?;
                experiments::run_bound_campaign(&cfg, &out)
            })
        }
        Command::ExportFamily(args) => {
            let mut cfg = file.export_family.ok_or_else(|| missing(name))?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = &args.out {
                cfg.out_dir = out.clone();
            }
            prepare_out_dir(&cfg.out_dir)?;
            let out = cfg.out_dir.clone();
            experiments::with_manifest(&out, name, cfg.seed, &cfg, || {
                cfg.validate()?;
                experiments::run_export_family(&cfg, &out)
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
