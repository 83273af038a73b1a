use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use vk_cli::commands;
use vk_cli::config::ScenarioConfig;
use vk_cli::{configure_threads, CliError};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Closed-form relaxation curve and its classification.
    Relax,
    /// Moment-system trajectory.
    Ee,
    /// Reference solution of the full nonlocal equation.
    Pde,
    /// Semiclassical packet against the reference solver over several D.
    Compare,
}

/// Weak-diffusion asymptotics of the ionization-recombination kinetic equation.
#[derive(Debug, Parser)]
#[command(name = "vapor-kinetics", version, about)]
struct Args {
    command: Command,
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the scenario's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(args: &Args) -> Result<String, CliError> {
    configure_threads(std::env::var("VK_THREADS").ok().as_deref())?;
    let cfg = ScenarioConfig::load(&args.config)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    match args.command {
        Command::Relax => commands::relax(&cfg, &out),
        Command::Ee => commands::ee(&cfg, &out),
        Command::Pde => commands::pde(&cfg, &out),
        Command::Compare => commands::compare(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match execute(&args) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::Threshold { report, .. } = &e {
                print!("{report}");
            }
            eprintln!("vapor-kinetics: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
