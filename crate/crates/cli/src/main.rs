use std::path::PathBuf;
use std::process::ExitCode;

use biphoton_cli::{CliError, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "biphoton", version, about = "Temporal tomography of narrowband biphotons")]
struct Cli {
    /// Flat TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Acceptance threshold, e.g. `phase_rmse_rad=1e-3` (repeatable).
    #[arg(long = "threshold", global = true, value_name = "KEY=VALUE")]
    thresholds: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the truth envelope, six-pack histograms at both delays, C12 and event streams.
    Simulate,
    /// Reconstruct amplitude and phase from a directory of histogram CSVs.
    Reconstruct {
        /// Directory holding `hist_*.csv` (defaults to the output directory).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Nonclassicality metrics from an event-stream CSV.
    Metrics {
        /// Event file (defaults to `events.csv` in the output directory).
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// simulate, reconstruct and metrics in one run, then check thresholds.
    Pipeline,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    for t in &cli.thresholds {
        cfg.set_threshold(t)?;
    }
    Ok(match cli.command {
        Command::Simulate => json(&biphoton_cli::simulate(&cfg)?),
        Command::Reconstruct { input } => {
            let input = input.unwrap_or_else(|| cfg.out_dir.clone());
            json(&biphoton_cli::reconstruct(&cfg, &input)?)
        }
        Command::Metrics { events } => {
            let events = events.unwrap_or_else(|| cfg.out_dir.join(biphoton_cli::commands::EVENTS));
            json(&biphoton_cli::metrics(&cfg, &events, None)?)
        }
        Command::Pipeline => json(&biphoton_cli::pipeline(&cfg)?),
    })
}

fn json<T: serde::Serialize>(report: &T) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
