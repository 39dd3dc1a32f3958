use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nested_karlin_cli::commands::{cmd_limit_sample, cmd_moments, cmd_simulate, cmd_spectral, cmd_verify};
use nested_karlin_cli::{CliError, CliResult, ExperimentConfig};

/// Exact moments, simulation and limit-process checks for nested Karlin
/// occupancy schemes.
#[derive(Parser)]
#[command(name = "nested-karlin", version)]
struct Cli {
    /// TOML experiment file; built-in defaults are used without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Comma-separated criterion or claim id prefixes for `verify`.
    #[arg(long, global = true, value_delimiter = ',')]
    only: Option<Vec<String>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact moment tables and asymptotic ratios.
    Moments,
    /// Monte Carlo campaign of occupancy paths.
    Simulate,
    /// Paths of the limit Gaussian process.
    LimitSample,
    /// Spectral density and its Fourier check.
    Spectral,
    /// Full verification suite.
    Verify,
}

fn load(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(only) = &cli.only {
        cfg.verify.only = only.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = load(cli)?;
    let sink = match cli.command {
        Command::Moments => cmd_moments(&cfg)?,
        Command::Simulate => cmd_simulate(&cfg)?,
        Command::LimitSample => cmd_limit_sample(&cfg)?,
        Command::Spectral => cmd_spectral(&cfg)?,
        Command::Verify => {
            let (sink, report) = cmd_verify(&cfg)?;
            for c in &report.criteria {
                println!(
                    "{:<14} {}  {} claims  {:.1}s",
                    c.id,
                    if c.pass() { "PASS" } else { "FAIL" },
                    c.claims.len(),
                    c.seconds
                );
            }
            println!("report written to {}", sink.dir().join("verification.json").display());
            let failing = report.failing();
            if !failing.is_empty() {
                return Err(CliError::Failed(failing.iter().map(|s| s.to_string()).collect()));
            }
            return Ok(());
        }
    };
    for f in sink.written() {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
