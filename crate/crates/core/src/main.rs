use clap::{Parser, Subcommand};
use rescap::cli::{run, Command, Overrides};
use rescap::config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Resonance capture analysis and simulation.
#[derive(Parser)]
#[command(name = "rescap", version)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// TOML configuration, or a JSON report whose embedded config is reused.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of sample paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Averaging order.
    #[arg(long, global = true)]
    order: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Resonant amplitude and the nu(r) table.
    Resonance,
    /// Averaged coefficients and the lambda(psi) table.
    Averaged,
    /// Regime of the averaged system.
    Classify,
    /// Sample paths as CSV.
    Simulate,
    /// Monte Carlo capture probability.
    Capture,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let command = match args.command {
        Cmd::Resonance => Command::Resonance,
        Cmd::Averaged => Command::Averaged,
        Cmd::Classify => Command::Classify,
        Cmd::Simulate => Command::Simulate,
        Cmd::Capture => Command::Capture,
    };
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        paths: args.paths,
        order: args.order,
    };
    let outcome = args
        .config
        .as_deref()
        .map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
        .and_then(|cfg| overrides.apply(cfg))
        .and_then(|cfg| run(command, &cfg));
    match outcome {
        Ok(report) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).unwrap_or_default()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
