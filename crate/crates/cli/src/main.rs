use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rsop_core::experiment::{run_experiment, AlgorithmChoice, ExperimentKind, RunOptions};
use rsop_core::report::{write_outputs, Provenance};
use rsop_core::scenario::{bundled_names, bundled_source};
use rsop_core::{Protocol, Scenario};

/// Random sensing order experiments: analysis, simulation, optimization and
/// adaptive control of sequential spectrum sensing.
#[derive(Parser)]
#[command(name = "rsop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytical throughput and interference over the sweep axes.
    Analyze(RunArgs),
    /// Monte Carlo simulation over the sweep axes.
    Simulate(RunArgs),
    /// Grid search for the best (tau, p).
    Optimize(RunArgs),
    /// Closed-loop adaptive control.
    Adapt(RunArgs),
    /// Analysis and simulation side by side over the sweep axes.
    Sweep(RunArgs),
    /// Modified against conventional p-persistent access.
    PpersistentCompare(RunArgs),
    /// Mean update direction of the adaptive algorithm on a grid.
    SubgradientField(RunArgs),
    /// Throughput upper bound.
    UpperBound(RunArgs),
    /// List bundled scenarios or print one.
    Scenarios {
        /// Print the source of this scenario.
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Modified,
    Conventional,
}

#[derive(Args)]
struct RunArgs {
    /// Bundled scenario name or path to a scenario file.
    #[arg(long, default_value = "default")]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Replications (realizations for the subgradient field).
    #[arg(long)]
    reps: Option<u64>,
    /// Slots per replication.
    #[arg(long)]
    slots: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Optimizer grid as TAUxP, e.g. 64x64.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    /// Adaptive algorithm: 1, 2 or none.
    #[arg(long)]
    algorithm: Option<String>,
    /// Sweep axis, `name=lo:hi:step` or `name=v1,v2`; repeatable.
    #[arg(long = "axis")]
    axes: Vec<String>,
    /// Frames of the closed-loop run.
    #[arg(long)]
    frames: Option<u64>,
}

fn parse_grid(s: &str) -> Result<[usize; 2]> {
    let (a, b) = s.split_once('x').context("grid must read TAUxP, e.g. 64x64")?;
    Ok([a.trim().parse()?, b.trim().parse()?])
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<()> {
    let scenario = Scenario::lookup(&args.scenario)?;
    let opts = RunOptions {
        seed: args.seed,
        reps: args.reps,
        slots: args.slots,
        grid: args.grid.as_deref().map(parse_grid).transpose()?,
        protocol: args.protocol.map(|p| match p {
            ProtocolArg::Modified => Protocol::Modified,
            ProtocolArg::Conventional => Protocol::Conventional,
        }),
        algorithm: args.algorithm.as_deref().map(str::parse::<AlgorithmChoice>).transpose()?,
        axes: args.axes,
        frames: args.frames,
    };
    let out = run_experiment(kind, &scenario, &opts)?;
    let prov = Provenance::new(&scenario.name, &scenario.hash(), out.seed);
    let files = write_outputs(&args.out, &prov, kind.as_str(), &out.tables, out.summary.clone())
        .with_context(|| format!("cannot write results to {}", args.out.display()))?;
    println!("{} {} hash={} seed={}", kind, scenario.name, prov.hash, prov.seed);
    for f in files {
        println!("wrote {}", f.display());
    }
    println!("{}", serde_json::to_string(&out.summary)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => run(ExperimentKind::Analyze, a),
        Command::Simulate(a) => run(ExperimentKind::Simulate, a),
        Command::Optimize(a) => run(ExperimentKind::Optimize, a),
        Command::Adapt(a) => run(ExperimentKind::Adapt, a),
        Command::Sweep(a) => run(ExperimentKind::Sweep, a),
        Command::PpersistentCompare(a) => run(ExperimentKind::PpersistentCompare, a),
        Command::SubgradientField(a) => run(ExperimentKind::SubgradientField, a),
        Command::UpperBound(a) => run(ExperimentKind::UpperBound, a),
        Command::Scenarios { show } => scenarios(show),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn scenarios(show: Option<String>) -> Result<()> {
    match show {
        Some(name) => match bundled_source(&name) {
            Some(src) => print!("{src}"),
            None => bail!("no bundled scenario {name:?}"),
        },
        None => {
            for name in bundled_names() {
                let s = Scenario::bundled(name)?;
                println!("{name:<20} {}", s.description);
            }
        }
    }
    Ok(())
}
