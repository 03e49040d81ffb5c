//! `fairhgr` command-line experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod output;

use commands::Context;
use config::{Ini, GLOBAL_KEYS};
use error::CliError;

/// Environment variable naming a config file when `--config` is absent.
const CONFIG_ENV: &str = "FAIRHGR_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "fairhgr", version, about = "Dependence estimators and fair regression experiments")]
struct Cli {
    /// INI config file with a [global] section and one section per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in [global].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in [global].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace existing output files.
    #[arg(long, global = true)]
    overwrite: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Every estimator on one generated or CSV sample pair.
    Estimate,
    /// Patterns × noise levels × estimators.
    BenchPatterns,
    /// χ², HGR² and the mutual-information bound on bivariate Gaussians.
    GaussianSweep,
    /// Standard and fair models on the synthetic housing scenario.
    Synthetic,
    /// Fair training on a CSV dataset over several seeds.
    Train,
}

const SECTIONS: &[&str] = &["global", "estimate", "bench-patterns", "gaussian-sweep", "synthetic", "train"];

fn context(cli: &Cli) -> Result<Context, CliError> {
    let path = cli.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let ini = match path {
        Some(p) => Ini::load(&p)?,
        None => Ini::default(),
    };
    ini.check_sections(SECTIONS)?;
    let global = ini.section("global");
    global.check_keys(GLOBAL_KEYS)?;
    let seed = match cli.seed {
        Some(s) => s,
        None => global.get_or("seed", 0)?,
    };
    let out = match &cli.out {
        Some(o) => o.clone(),
        None => global.get_or("output_dir", PathBuf::from("fairhgr-out"))?,
    };
    Ok(Context {
        ini,
        seed,
        out,
        overwrite: cli.overwrite,
    })
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let ctx = context(cli)?;
    match cli.command {
        Command::Estimate => commands::estimate::run(&ctx),
        Command::BenchPatterns => commands::bench::run(&ctx),
        Command::GaussianSweep => commands::sweep::run(&ctx),
        Command::Synthetic => commands::synthetic::run(&ctx),
        Command::Train => commands::train::run(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
