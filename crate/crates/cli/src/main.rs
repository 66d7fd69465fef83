mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::*;
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "tcforge",
    version,
    about = "Coupled boundary time crystal simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; the command default is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel work.
    #[arg(long, global = true, env = "TCFORGE_THREADS")]
    threads: Option<usize>,

    /// Integrate the fluctuation covariance and report correlation measures (simulate, sweep).
    #[arg(long, global = true)]
    with_fluctuations: bool,

    /// Parse and validate the configuration, then exit without running.
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// One trajectory with thermodynamics, optionally with covariances and correlations.
    Simulate,
    /// Two-axis parameter sweep with phase labels and time averages.
    Sweep,
    /// Stored energy and charging efficiency for one or more couplings.
    Battery,
    /// Finite-N exact evolution compared with the mean field.
    Oracle,
    /// Spread of long-time averages over random starts.
    Multistability,
}

fn no_fluctuations(cli: &Cli, command: &str) -> Result<(), CliError> {
    if cli.with_fluctuations {
        return Err(CliError::Config(format!(
            "--with-fluctuations does not apply to `{command}`"
        )));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    let path = cli.config.as_deref();
    let out: &Path = &cli.out;
    match cli.command {
        Command::Simulate => {
            let mut cfg: SimulateConfig = load(path)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            cfg.with_fluctuations |= cli.with_fluctuations;
            if cli.check {
                return cfg.validate().map(|_| Vec::new());
            }
            commands::simulate(&cfg, out)
        }
        Command::Sweep => {
            let mut cfg: SweepConfig = load(path)?;
            cfg.0.seed = cli.seed.unwrap_or(cfg.0.seed);
            if cli.with_fluctuations && cfg.0.correlations.is_none() {
                cfg.0.correlations = Some(cfg.0.grid);
            }
            if cli.check {
                return cfg.0.validate().map(|_| Vec::new()).map_err(Into::into);
            }
            let (outputs, failures) = commands::sweep_cmd(&cfg, out)?;
            if failures > 0 {
                eprintln!("warning: {failures} sweep point(s) failed; see the error column");
            }
            Ok(outputs)
        }
        Command::Battery => {
            no_fluctuations(cli, "battery")?;
            let mut cfg: BatteryConfig = load(path)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            if cli.check {
                return cfg.validate().map(|_| Vec::new());
            }
            commands::battery(&cfg, out)
        }
        Command::Oracle => {
            no_fluctuations(cli, "oracle")?;
            let mut cfg: OracleConfig = load(path)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            if cli.check {
                return cfg.validate().map(|_| Vec::new());
            }
            commands::oracle(&cfg, out)
        }
        Command::Multistability => {
            no_fluctuations(cli, "multistability")?;
            let mut cfg: MultistabilityConfig = load(path)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            if cli.check {
                return cfg.validate().map(|_| Vec::new());
            }
            commands::multistability(&cfg, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(n) => tcforge::exec::with_threads(n, || run(&cli))
            .map_err(CliError::from)
            .and_then(|r| r),
        None => run(&cli),
    };
    match result {
        Ok(outputs) => {
            for name in outputs {
                println!("{}", cli.out.join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
