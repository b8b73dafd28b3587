//! `htcopt`: optimise, simulate, generate traces and analyse results.

mod analyze;
mod config;
mod optimize;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use htcopt::genome::{self, GenomeSpec, RlParameterSet};
use htcopt::sim::{AccountingMode, SimSettings};
use htcopt::traces::{generate, TraceConfig};
use htcopt::tuning::simulate_rl;

use crate::config::{load_traces, read_json, write_atomic};

/// A user-facing validation failure; exits with status 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Debug, Parser)]
#[command(name = "htcopt", version, about = "Tune an RL scheduler for an HTC pool against energy and task overhead")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run NSGA-II over scheduler parameters.
    Optimize(optimize::Args),
    /// Simulate one parameter set.
    Simulate(SimulateArgs),
    /// Write a synthetic trace directory.
    GenTraces(GenTracesArgs),
    /// Pareto front, clusters, Lasso and summary of an optimize run.
    Analyze(analyze::Args),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Accounting {
    HtcAttribution,
    TotalFacility,
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    /// Scheduler parameters (JSON).
    #[arg(long)]
    params: PathBuf,
    /// Trace directory.
    #[arg(long)]
    traces: PathBuf,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scheduler seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 600)]
    suspend_timeout: i64,
    #[arg(long, value_enum, default_value_t = Accounting::HtcAttribution)]
    accounting: Accounting,
    /// Simulated horizon in seconds (default: trace span).
    #[arg(long)]
    horizon: Option<i64>,
}

#[derive(Debug, clap::Args)]
struct GenTracesArgs {
    /// Trace generator config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let params: RlParameterSet = read_json(&args.params, "parameters")?;
    genome::validate(&GenomeSpec::rl_default(), &params)
        .map_err(|e| Invalid(format!("{}: {e}", args.params.display())))?;
    let traces = load_traces(&args.traces)?;
    let settings = SimSettings {
        suspend_timeout_s: args.suspend_timeout,
        accounting: match args.accounting {
            Accounting::HtcAttribution => AccountingMode::HtcAttribution,
            Accounting::TotalFacility => AccountingMode::TotalFacility,
        },
        sleep_after_s: None,
        horizon_s: args.horizon,
    };
    let result = simulate_rl(&traces, &params, &settings, args.seed)
        .map_err(|e| Invalid(e.to_string()))?;
    let json = serde_json::to_string_pretty(&result)? + "\n";
    match args.out {
        Some(path) => write_atomic(&path, json.as_bytes())?,
        None => print!("{json}"),
    }
    Ok(())
}

fn gen_traces(args: GenTracesArgs) -> anyhow::Result<()> {
    let mut cfg: TraceConfig = match &args.config {
        Some(p) => read_json(p, "trace config")?,
        None => TraceConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let traces = generate(&cfg).map_err(|e| Invalid(e.to_string()))?;
    traces.save(&args.out)?;
    eprintln!(
        "{} computers, {} sessions, {} tasks written to {}",
        traces.computers.len(),
        traces.sessions.len(),
        traces.tasks.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize(a) => optimize::run(a),
        Command::Simulate(a) => simulate(a),
        Command::GenTraces(a) => gen_traces(a),
        Command::Analyze(a) => analyze::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<Invalid>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
