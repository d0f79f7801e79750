use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use transmon_cli::{cmd_emulate, cmd_impedance, cmd_rates, cmd_scan, cmd_spectrum, load_config, CliError};

#[derive(Parser)]
#[command(name = "transmon", version, about = "Drive-induced transmon transition rates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration (frequencies in Hz).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides output.directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides emulation.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Transition frequencies versus flux and drive-line crossings.
    Spectrum,
    /// Re Z at the working point.
    Impedance,
    /// Rates versus Stark shift at the working point.
    Rates,
    /// Rate map over qubit frequency and Stark shift.
    Scan,
    /// Synthetic measurement and rate extraction.
    Emulate,
}

fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = load_config(path)?;
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    match cli.command {
        Command::Spectrum => cmd_spectrum(&cfg, &out),
        Command::Impedance => cmd_impedance(&cfg, &out),
        Command::Rates => cmd_rates(&cfg, &out),
        Command::Scan => cmd_scan(&cfg, &out),
        Command::Emulate => cmd_emulate(&cfg, &out, cli.seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!("{}", json!({ "status": "error", "exit_code": e.exit_code(), "error": e.to_string() }));
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
