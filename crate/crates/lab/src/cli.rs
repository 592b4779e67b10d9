//! Command-line interface: `mfl-lab <subcommand> --config <path> [--jobs N]
//! [--out DIR] [--seed S] [--emit-svg]`.

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rayon::prelude::*;

use crate::config::ConfigFile;
use crate::error::{LabError, EXIT_CONFIG, EXIT_PASS};
use crate::pipelines::{run_experiment, RunContext};
use crate::report::{Status, Summary};

/// Experiment kind to run; every experiment in the config must match it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Flow,
    MflParticles,
    KernelCheck,
    Sandwich,
    Afi,
    Spectrum,
    Traj,
    Rates,
    Bounds,
}

impl Command {
    pub fn tag(self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::MflParticles => "mfl-particles",
            Command::KernelCheck => "kernel-check",
            Command::Sandwich => "sandwich",
            Command::Afi => "afi",
            Command::Spectrum => "spectrum",
            Command::Traj => "traj",
            Command::Rates => "rates",
            Command::Bounds => "bounds",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mfl-lab", version, about = "Run gradient-flow experiments from a TOML config")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Experiments run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output root; defaults to the config's `out` or `results`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed overriding every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write SVG plots next to the CSV files.
    #[arg(long)]
    pub emit_svg: bool,
}

/// Seed of experiments when neither the CLI nor the config sets one.
pub const DEFAULT_SEED: u64 = 0;

fn load(cli: &Cli) -> Result<(ConfigFile, PathBuf), LabError> {
    let cfg = ConfigFile::load(&cli.config)?;
    let tag = cli.command.tag();
    for e in &cfg.experiments {
        if e.kind.tag() != tag {
            return Err(LabError::Config(format!("experiment `{}` has kind `{}`, subcommand is `{tag}`", e.name, e.kind.tag())));
        }
    }
    if cli.jobs == 0 {
        return Err(LabError::Config("--jobs must be at least 1".into()));
    }
    let base = cli.config.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

/// Runs every experiment of the config and returns the process exit code,
/// the largest code of any experiment (config errors outrank assertion
/// failures).
///
/// Summary lines go to standard output, in config order; errors go to
/// standard error.
pub fn run(cli: &Cli) -> u8 {
    let (cfg, base) = match load(cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("mfl-lab: {e}");
            return e.exit_code();
        }
    };
    let out = cli.out.clone().or_else(|| cfg.out.clone().map(|o| base.join(o))).unwrap_or_else(|| PathBuf::from("results"));
    let ctx = RunContext { base, out, default_seed: DEFAULT_SEED, seed_override: cli.seed, emit_svg: cli.emit_svg };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("mfl-lab: cannot start {} workers: {e}", cli.jobs);
            return EXIT_CONFIG;
        }
    };
    let results: Vec<Result<Summary, LabError>> =
        pool.install(|| cfg.experiments.par_iter().map(|e| run_experiment(e, cfg.seed, &ctx)).collect());
    let mut code = EXIT_PASS;
    for r in results {
        match r {
            Ok(s) => {
                for line in &s.printed {
                    println!("{line}");
                }
                let status = match s.status {
                    Status::Passed => "PASS",
                    Status::Failed => "FAIL",
                    Status::Error => "ERROR",
                };
                println!("{} {} {status} {}", s.kind, s.name, s.dir.display());
                for p in &s.problems {
                    eprintln!("mfl-lab: {}: {p}", s.name);
                }
                code = code.max(s.code);
            }
            Err(e) => {
                eprintln!("mfl-lab: {e}");
                code = code.max(e.exit_code());
            }
        }
    }
    code
}
