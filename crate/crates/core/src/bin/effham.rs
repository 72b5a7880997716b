use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use effham::cli::{self, RunConfig};

#[derive(Parser)]
#[command(name = "effham", version, about = "Effective Hamiltonians of periodic switching Markov processes")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// JSON run config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Named preset, e.g. `constant_drift(1)` (overrides the config model).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Base seed for stochastic commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Tabulate H(p) with eigen certificates.
    Sweep,
    /// Macroscopic velocity DH(0).
    Velocity,
    /// Lagrangian by Legendre transform, and optional path rate.
    Legendre,
    /// Monte Carlo concentration experiment.
    Simulate,
    /// Normalization, convexity, symmetry, coercivity, detailed balance.
    Check,
    /// Validate a model.
    Validate,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if let Some(k) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(cli::EXIT_INVALID as u8);
        }
    }
    let cfg = match &args.config {
        Some(path) => RunConfig::from_file(path),
        None => Ok(RunConfig::default()),
    };
    let result = cfg.and_then(|mut cfg| {
        if args.preset.is_some() {
            cfg.preset = args.preset.clone();
        }
        if args.out.is_some() {
            cfg.out = args.out.clone();
        }
        match args.command {
            Command::Sweep => cli::cmd_sweep(&cfg),
            Command::Velocity => cli::cmd_velocity(&cfg),
            Command::Legendre => cli::cmd_legendre(&cfg),
            Command::Simulate => cli::cmd_simulate(&cfg, args.seed),
            Command::Check => cli::cmd_check(&cfg),
            Command::Validate => cli::cmd_validate(&cfg),
        }
    });
    let code = cli::exit_code(&result);
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(code as u8)
}
