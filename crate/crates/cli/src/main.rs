use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use depthflow::experiments::{self, ExperimentConfig, ExperimentKind, RunContext, Scale};
use depthflow::{Error, Result};

/// Monte Carlo experiments on deep residual networks with depth-scaled
/// random parameters and their limiting diffusions.
///
/// On failure the last line on stderr reads `error[<category>]: <message>`
/// (multi-line details are printed above it)
/// and the exit status identifies the category (2 config, 3 io, 4 format,
/// 5 numerical, 6 data, 7 solver).
#[derive(Parser, Debug)]
#[command(name = "depthflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Discrete network against its diffusion limit (KS, KDE, scatter)
    SanityCheck(RunArgs),
    /// Random functions on an input grid with quantile bands
    FunctionSpace(RunArgs),
    /// Correlation of outputs between inputs, as CSV and SVG heatmap
    CorrHeatmap(RunArgs),
    /// Training grid over depth, width and gradient mode
    Sgd(RunArgs),
    /// Rejection ABC over random functions
    Abc(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: out/<experiment>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Size preset; overrides the config
    #[arg(long, value_parser = parse_scale)]
    scale: Option<Scale>,
    /// Worker threads (results do not depend on it)
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_scale(s: &str) -> std::result::Result<Scale, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::SanityCheck(a) => (ExperimentKind::SanityCheck, a),
            Command::FunctionSpace(a) => (ExperimentKind::FunctionSpace, a),
            Command::CorrHeatmap(a) => (ExperimentKind::CorrHeatmap, a),
            Command::Sgd(a) => (ExperimentKind::Sgd, a),
            Command::Abc(a) => (ExperimentKind::Abc, a),
        }
    }
}

fn execute(kind: ExperimentKind, args: RunArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let out = args.out.unwrap_or_else(|| Path::new("out").join(kind.name()));
    let mut ctx = RunContext::new(&cfg, out);
    if let Some(seed) = args.seed {
        ctx.seed = seed;
    }
    if let Some(scale) = args.scale {
        ctx.scale = scale;
    }
    ctx.base_dir = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let report = experiments::with_threads(args.threads, || experiments::run(kind, &cfg, &ctx))??;
    for (k, v) in &report.summary {
        println!("{k}={v}");
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match execute(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // detail first, then one parseable line
            let msg = e.to_string();
            let mut lines = msg.trim_end().lines();
            let head = lines.next().unwrap_or_default();
            if lines.next().is_some() {
                eprintln!("{}", msg.trim_end());
            }
            eprintln!("error[{}]: {head}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
