use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lattice_lab_cli::commands::{cmd_attractor, cmd_liouville, cmd_measures, cmd_simulate, cmd_sweep_all, noise_path};
use lattice_lab_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "lattice-lab", version, about = "Seeded experiments on a stochastic p-Laplacian lattice system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// Use a previously written noise file instead of sampling one.
    #[arg(long)]
    reuse_noise: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Single trajectory with energy-inequality columns.
    Simulate(RunArgs),
    /// Pullback clouds and their semi-distances to the reference cloud.
    Attractor(RunArgs),
    /// Empirical measures and bounded-Lipschitz distances.
    Measures(RunArgs),
    /// Balance-law terms and residuals of measure families.
    Liouville(RunArgs),
    /// All of the above on one noise path.
    SweepAll(RunArgs),
    /// Print the default configuration.
    Defaults,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (args, cmd): (RunArgs, fn(&RunConfig, &_, &_) -> Result<PathBuf, CliError>) = match cli.command {
        Command::Defaults => {
            print!("{}", RunConfig::default().to_toml());
            return Ok(());
        }
        Command::Simulate(a) => (a, cmd_simulate),
        Command::Attractor(a) => (a, cmd_attractor),
        Command::Measures(a) => (a, cmd_measures),
        Command::Liouville(a) => (a, cmd_liouville),
        Command::SweepAll(a) => (a, cmd_sweep_all),
    };
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = args.out {
        cfg.output.dir = dir;
    }
    if let Some(k) = args.threads {
        set_threads(k)?;
    }
    let path = noise_path(&cfg, args.reuse_noise.as_deref())?;
    let manifest = cmd(&cfg, &path, &cfg.output.dir)?;
    log::info!("wrote {}", manifest.display());
    Ok(())
}

#[cfg(feature = "parallel")]
fn set_threads(k: usize) -> Result<(), CliError> {
    if k == 0 {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| CliError::Config(format!("--threads: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn set_threads(k: usize) -> Result<(), CliError> {
    if k > 1 {
        log::warn!("built without the parallel feature; ignoring --threads {k}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lattice-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
