use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sqvac::runner::{self, Config, Overrides};
use sqvac::{Error, Result};

/// Squeezed-vacuum transmittivity measurement simulator.
#[derive(Debug, Parser)]
#[command(name = "sqvac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the number of samples per acquisition.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Write raw samples of every acquisition (size-guarded).
    #[arg(long, global = true)]
    keep_samples: bool,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate OPO output photon numbers over a parameter grid.
    OpoSweep,
    /// Run a synthetic transmittivity experiment.
    Experiment,
    /// Tabulate accuracy and photon dose, squeezed vs classical.
    Budget,
    /// Check Gaussianity of quadrature samples via excess kurtosis.
    KurtosisCheck {
        /// Read samples from this CSV instead of generating them.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn run(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let mut cfg = Config::load(path)?;
    Overrides {
        seed: cli.seed,
        samples: cli.samples,
        keep_samples: cli.keep_samples,
    }
    .apply(&mut cfg);
    match &cli.command {
        Command::OpoSweep => {
            let p = runner::cmd_opo_sweep(&cfg, &cli.out)?;
            println!("wrote {}", p.display());
        }
        Command::Experiment => {
            runner::cmd_experiment(&cfg, &cli.out)?;
            println!("wrote {}", cli.out.display());
        }
        Command::Budget => {
            for p in runner::cmd_budget(&cfg, &cli.out)? {
                println!("wrote {}", p.display());
            }
        }
        Command::KurtosisCheck { input } => {
            let p = runner::cmd_kurtosis_check(&cfg, input.as_deref(), &cli.out)?;
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(Error::Config(format!("cannot build thread pool: {e}"))),
        },
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(runner::exit_code(&e) as u8)
        }
    }
}
