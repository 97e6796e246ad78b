//! `twpa`: command-line driver for the SNAIL TWPA models.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Run;
use crate::config::{Overrides, RunConfig};
use crate::error::CliError;
use crate::output::Artifacts;

#[derive(Parser)]
#[command(name = "twpa", version, about = "Models of a flux-tunable SNAIL traveling-wave parametric amplifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flux bias Φ_ext/Φ₀.
    #[arg(long, global = true)]
    flux: Option<f64>,
    #[arg(long, global = true)]
    fp_ghz: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    power_dbm: Option<f64>,
    /// Chain length in cells, rounded down to whole supercells.
    #[arg(long, global = true)]
    cells: Option<usize>,
    /// minimal, extended or cascade-N.
    #[arg(long, global = true)]
    tier: Option<String>,
    #[arg(long, global = true)]
    signal_points: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// SNAIL potential minimum, expansion coefficients and inductance over flux.
    SnailSweep,
    /// Bloch dispersion, Bloch impedance and band edges at one flux.
    Dispersion,
    /// Linear |S21| over frequency and flux.
    S21Map,
    /// Fit E_J2 and C to the target impedance and band edge.
    Calibrate,
    /// Signal gain over the signal grid from coupled-mode equations.
    GainSweep,
    /// Second-harmonic growth of a single pump tone from the two-mode equations.
    Shg,
    /// Output at f and 2f for a weak tone swept across the band.
    HarmonicResponse,
    /// Time-domain simulation of the full nonlinear ladder.
    Oracle,
    /// Fit the damping and added-noise model to measured noise data.
    NoiseFit {
        /// CSV with gain_db,dsnr_db or gain_db,t_noise_k,f_hz columns.
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
    },
    /// Regenerate every figure's data set.
    ReproducePaper,
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let c = cli.common;
    let mut cfg = RunConfig::load(c.config.as_deref())?;
    cfg.apply(&Overrides {
        out: c.out,
        jobs: c.jobs,
        seed: c.seed,
        flux: c.flux,
        fp_ghz: c.fp_ghz,
        power_dbm: c.power_dbm,
        cells: c.cells,
        tier: c.tier,
        signal_points: c.signal_points,
    })?;
    let (f, flux) = match cli.command {
        Command::SnailSweep => (None, Some((0.0, 0.5, 501))),
        Command::Dispersion => (Some((0.1, 30.0, 300)), None),
        Command::S21Map => (Some((0.1, 20.0, 200)), Some((0.0, 0.5, 51))),
        Command::HarmonicResponse => (Some((3.0, 13.35, 70)), None),
        _ => (None, None),
    };
    cfg.resolve_grids(f, flux);

    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.execution.jobs)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;

    let mut art = Artifacts::create(&cfg.execution.out)?;
    art.text("resolved_config.toml", &cfg.to_toml())?;
    let mut r = Run {
        cfg: &cfg,
        art: &mut art,
        gaps: Vec::new(),
    };
    match &cli.command {
        Command::SnailSweep => commands::snail_sweep(&mut r),
        Command::Dispersion => commands::dispersion(&mut r),
        Command::S21Map => commands::s21_map(&mut r),
        Command::Calibrate => commands::calibrate_cmd(&mut r),
        Command::GainSweep => commands::gain_sweep_cmd(&mut r),
        Command::Shg => commands::shg(&mut r),
        Command::HarmonicResponse => commands::harmonic_response_cmd(&mut r),
        Command::Oracle => commands::oracle(&mut r),
        Command::NoiseFit { data } => commands::noise_fit(&mut r, data),
        Command::ReproducePaper => commands::reproduce_paper(&mut r),
    }?;
    let gaps = std::mem::take(&mut r.gaps);
    let manifest = art.finish()?;
    if gaps.is_empty() {
        Ok(manifest)
    } else {
        Err(CliError::Partial(gaps))
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(manifest) => {
            println!("wrote {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
