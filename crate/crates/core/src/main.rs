use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use photon_source::app::{error_record, run, Command};
use photon_source::config::parse_config;
use photon_source::error::{Error, Result};

#[derive(Parser)]
#[command(
    version,
    about = "Flux-tunable single-photon source: simulation and parameter estimation"
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Named device profile (overrides the config).
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Worker threads for parallel grid points.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Synthetic reflection spectroscopy over a flux grid, with per-trace fits.
    SpectroSweep,
    /// Global fit of the decay-rate flux curve.
    FitCurve,
    /// Rabi oscillations of the emitted field.
    Rabi,
    /// Free-induction or intrinsic T1/T2 measurements.
    Decay,
    /// Store at the decoupling point and release on demand.
    Triggered,
    /// Release through square, exponential or cubic-exponential flux edges.
    Shaped,
    /// Flux program for a target wavepacket.
    InvertShape,
    /// Preparation and emission fidelities with loss budget.
    FidelityTable,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Command {
        match s {
            Sub::SpectroSweep => Command::SpectroSweep,
            Sub::FitCurve => Command::FitCurve,
            Sub::Rabi => Command::Rabi,
            Sub::Decay => Command::Decay,
            Sub::Triggered => Command::Triggered,
            Sub::Shaped => Command::Shaped,
            Sub::InvertShape => Command::InvertShape,
            Sub::FidelityTable => Command::FidelityTable,
        }
    }
}

fn main_inner(cli: &Cli) -> Result<()> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = &cli.profile {
        cfg.profile = p.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(o) = &cli.out {
        cfg.output = Some(o.clone());
    }
    cfg.device()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config {
                path: "threads".into(),
                message: e.to_string(),
            })?;
    }
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    let command = Command::from(cli.command);
    let manifest = run(command, &cfg, &out)?;
    eprintln!(
        "{command}: wrote {} files to {} in {:.2} s",
        manifest.outputs.len() + 1,
        out.display(),
        manifest.wall_clock_s
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("{}", error_record(&e));
            ExitCode::FAILURE
        }
    }
}
