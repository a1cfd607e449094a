//! `nwn`: device generation, synthetic data, detection, sweeps and benchmarks.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "nwn", version, about = "Nanowire network reservoir detector for two-band thermal anomalies")]
struct Cli {
    /// Run configuration JSON; flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for device generation and synthesis.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for detection.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file (gen-net) or directory (other commands).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a device and write it as JSON.
    GenNet(GenNetArgs),
    /// Write a labelled synthetic dataset.
    Synth(SynthArgs),
    /// Run detection on one granule or a whole manifest.
    Detect(DetectArgs),
    /// Sweep the decision threshold over a labelled dataset.
    Sweep(SweepArgs),
    /// Time detection and project hardware cost.
    Bench(BenchArgs),
    /// Score existing event maps against labels.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenNetArgs {
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub wire_count: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LevelArg {
    Raw,
    L1c,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Target fraction of event tiles across the dataset.
    #[arg(long, default_value_t = 0.02)]
    pub event_fraction: f64,
    /// Switches the synthesis defaults to this level before applying the config file.
    #[arg(long, value_enum)]
    pub level: Option<LevelArg>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BandArg {
    B8a,
    B12,
}

#[derive(Debug, Args)]
pub struct NetArg {
    /// Device JSON; generated from the config when absent.
    #[arg(long, value_name = "FILE")]
    pub net: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "input")]
pub struct DetectInput {
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub granule: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub net: NetArg,
    #[command(flatten)]
    pub input: DetectInput,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also write each distance grid as little-endian f64.
    #[arg(long)]
    pub distances: bool,
    /// Dump the per-step junction trace of tile ROW,COL of the first granule.
    #[arg(long, value_name = "ROW,COL", value_parser = parse_tile)]
    pub trace_tile: Option<(usize, usize)>,
    #[arg(long, value_enum, default_value = "b8a")]
    pub trace_band: BandArg,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub net: NetArg,
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Explicit ascending thresholds, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "grid_points")]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Write the event maps at the chosen threshold.
    #[arg(long)]
    pub save_events: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub net: NetArg,
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Manifest whose labels are matched to `<events>/<granule id>.events.json`.
    #[arg(long, value_name = "FILE", requires = "events")]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub events: Option<PathBuf>,
    #[arg(long, value_name = "FILE", requires = "labels", conflicts_with = "manifest")]
    pub event_map: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    /// Re-threshold the stored distances.
    #[arg(long)]
    pub threshold: Option<f64>,
}

fn parse_tile(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(',').ok_or("expected ROW,COL")?;
    Ok((r.trim().parse().map_err(|e| format!("{e}"))?, c.trim().parse().map_err(|e| format!("{e}"))?))
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Command::Synth(SynthArgs { level: Some(level), .. }) = &cli.command {
        cfg.synth = commands::synth_defaults(*level, cli.config.as_deref())?;
    }
    cfg.apply_overrides(cli.seed, cli.workers, cli.out.as_deref());
    cfg.validate()?;
    match cli.command {
        Command::GenNet(a) => commands::gen_net(cfg, a),
        Command::Synth(a) => commands::synth(cfg, a),
        Command::Detect(a) => commands::detect(cfg, a),
        Command::Sweep(a) => commands::sweep(cfg, a),
        Command::Bench(a) => commands::bench(cfg, a),
        Command::Eval(a) => commands::eval(cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NWN_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
