use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use dcl_core::engine::Parameterization;
use dcl_core::experiments::runner::{bounds, run_to_csv, Algorithm, ExperimentConfig, ExperimentKind};
use dcl_core::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Timing {
    /// Timing parameters are rates (mean duration is the reciprocal).
    Rate,
    /// Timing parameters are mean durations in ms.
    Mean,
}

/// Run a decentralized optimization experiment and write its trajectories
/// as CSV.
#[derive(Debug, Parser)]
#[command(name = "dcl", version)]
struct Cli {
    /// cs, logistic, matcomp or geomedian
    experiment: String,

    /// Comma-separated algorithms: pg-extra, async-pd, prox-dgd, async-prox-dgd
    #[arg(long, value_delimiter = ',')]
    algo: Vec<String>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Simulated time span in ms
    #[arg(long)]
    horizon_ms: Option<f64>,

    /// Step size for every algorithm (experiment default otherwise)
    #[arg(long)]
    alpha: Option<f64>,

    /// Global relaxation of the asynchronous algorithms
    #[arg(long)]
    eta: Option<f64>,

    /// Record every R iterations (sync) or updates (async)
    #[arg(long)]
    record_every: Option<u64>,

    /// Output CSV (stdout otherwise)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Print step-size and relaxation bounds for the instance and exit
    #[arg(long)]
    bounds: bool,

    /// How the timing-law parameters are read
    #[arg(long, value_enum, default_value_t = Timing::Rate)]
    timing: Timing,
}

fn config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let experiment: ExperimentKind = cli.experiment.parse()?;
    let mut cfg = ExperimentConfig::new(experiment, cli.seed);
    if !cli.algo.is_empty() {
        cfg.algorithms = cli
            .algo
            .iter()
            .map(|a| a.trim().parse::<Algorithm>())
            .collect::<Result<_, _>>()?;
    }
    if let Some(h) = cli.horizon_ms {
        cfg.horizon_ms = h;
    }
    if let Some(r) = cli.record_every {
        cfg.record_every = r;
    }
    cfg.alpha = cli.alpha;
    cfg.eta = cli.eta;
    cfg.out = cli.out.clone();
    cfg.timing = match cli.timing {
        Timing::Rate => Parameterization::Rate,
        Timing::Mean => Parameterization::Mean,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn print_bounds(cfg: &ExperimentConfig) -> Result<(), Error> {
    let b = bounds(cfg)?;
    let mut out = io::stdout().lock();
    writeln!(out, "experiment     {} (seed {})", cfg.experiment, cfg.seed)?;
    writeln!(out, "agents         {}", b.n)?;
    writeln!(out, "edges          {}", b.m)?;
    writeln!(out, "rho_min        {:.6e}", b.rho_min)?;
    writeln!(out, "kappa          {:.6e}", b.kappa)?;
    match b.alpha_max {
        Some(a) => writeln!(out, "2rho_min/L     {a:.6e}")?,
        None => writeln!(out, "2rho_min/L     unbounded (L = 0)")?,
    }
    let q: Vec<String> = b.q.iter().map(|q| format!("{q:.4}")).collect();
    writeln!(out, "q              {}", q.join(" "))?;
    writeln!(out, "eta_max(tau=0) {:.6e}", b.eta_max_tau0)?;
    writeln!(
        out,
        "eta_max(tau={}) {:.6e}",
        b.tau_observed, b.eta_max_observed
    )?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = config(cli)?;
    if cli.bounds {
        return print_bounds(&cfg);
    }
    let rows = run_to_csv(&cfg, io::stdout().lock())?;
    log::info!("wrote {rows} rows");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dcl: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
