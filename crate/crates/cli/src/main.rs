use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dtsim_core::experiment::{
    analyze_log, compare_stopsets, default_p_grid, run_experiment, sha256_hex, write_comparison,
    write_experiment, write_point, ExperimentConfig, Mode, RunManifest, StopSetChoice,
};
use dtsim_core::probe::{ProbeCost, ProbeLog};
use dtsim_core::stopset::{GlobalStopSet, DEFAULT_BITS_PER_ELEMENT, DEFAULT_HASHES};
use dtsim_core::synth::{generate_split, Split, TopoParams};
use dtsim_core::trace::DEFAULT_MAX_HOPS;
use dtsim_core::TraceSet;

#[derive(Parser)]
#[command(name = "dtsim", version, about = "Trace-driven Doubletree simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic trace set.
    Generate(GenerateArgs),
    /// Run classic probing or Doubletree at a single p (or fixed h).
    Run(RunArgs),
    /// Run Doubletree over a grid of p values.
    Sweep(RunArgs),
    /// Compare exact and Bloom filter global stop sets over a p grid.
    CompareStopsets(RunArgs),
    /// Recompute reports from a saved probe log.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 10)]
    monitors: usize,
    #[arg(long, default_value_t = 1000)]
    destinations: usize,
    #[arg(long, default_value_t = 60)]
    core: usize,
    #[arg(long, default_value_t = 200)]
    stubs: usize,
    #[arg(long, default_value_t = 0.05)]
    edge_prob: f64,
    #[arg(long, default_value_t = 0.6)]
    dest_response_rate: f64,
    #[arg(long, default_value_t = 0.95)]
    hop_response_rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Keep one half of a doubled destination list.
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    #[arg(long, default_value_t = DEFAULT_MAX_HOPS)]
    max_hops: usize,
    /// Output trace file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Copy, Clone, ValueEnum)]
enum SplitArg {
    A,
    B,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Classic,
    Doubletree,
}

#[derive(Copy, Clone, ValueEnum)]
enum StopSetArg {
    Exact,
    Bloom,
}

#[derive(Copy, Clone, ValueEnum)]
enum CostArg {
    Optimistic,
    Always3,
}

#[derive(Args)]
struct RunArgs {
    /// Trace file, one `monitor destination hop...` line per trace.
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Doubletree)]
    mode: ModeArg,
    /// Single p value.
    #[arg(long, conflicts_with = "p_grid")]
    p: Option<f64>,
    /// Comma-separated p values; defaults to the standard 29-point grid.
    #[arg(long, value_delimiter = ',')]
    p_grid: Option<Vec<f64>>,
    /// Fixed start hop for every monitor instead of deriving it from p.
    #[arg(long)]
    h: Option<usize>,
    #[arg(long, value_enum, default_value_t = StopSetArg::Exact)]
    stopset: StopSetArg,
    #[arg(long, default_value_t = DEFAULT_BITS_PER_ELEMENT)]
    bloom_bits_per_elem: usize,
    #[arg(long, default_value_t = DEFAULT_HASHES)]
    bloom_k: u32,
    /// Bloom sizing basis; defaults to the number of responding hop records.
    #[arg(long)]
    bloom_expected_n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed_order: u64,
    #[arg(long, default_value_t = 0)]
    seed_hash: u64,
    #[arg(long, value_enum, default_value_t = CostArg::Optimistic)]
    probes_per_hop: CostArg,
    #[arg(long, default_value_t = DEFAULT_MAX_HOPS)]
    max_hops: usize,
    #[arg(long, env = "DTSIM_OUT", default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Seed the global stop set from a file written by --stopset-out.
    #[arg(long)]
    stopset_in: Option<PathBuf>,
    /// Save each point's final global stop set as stopset.bin.
    #[arg(long)]
    stopset_out: bool,
    /// Also write the full probe log of each point.
    #[arg(long)]
    write_logs: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    traces: PathBuf,
    /// Probe log CSV written by --write-logs.
    #[arg(long)]
    log: PathBuf,
    #[arg(long, value_enum, default_value_t = CostArg::Optimistic)]
    probes_per_hop: CostArg,
    #[arg(long, default_value_t = DEFAULT_MAX_HOPS)]
    max_hops: usize,
    #[arg(long, env = "DTSIM_OUT", default_value = "out")]
    out: PathBuf,
}

fn cost(arg: CostArg) -> ProbeCost {
    match arg {
        CostArg::Optimistic => ProbeCost::Optimistic,
        CostArg::Always3 => ProbeCost::Always3,
    }
}

fn load(path: &Path, max_hops: usize) -> anyhow::Result<(TraceSet, String)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text =
        std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let set =
        TraceSet::parse(text, max_hops).with_context(|| format!("parsing {}", path.display()))?;
    if set.is_empty() {
        bail!("{} holds no traces", path.display());
    }
    Ok((set, sha256_hex(&bytes)))
}

fn config(args: &RunArgs, single: bool) -> anyhow::Result<ExperimentConfig> {
    let p_grid = match (&args.p, &args.p_grid) {
        (Some(p), _) => vec![*p],
        (None, Some(grid)) => grid.clone(),
        (None, None) if single && (args.h.is_some() || args.mode == ModeArg::Classic) => vec![],
        (None, None) if single => bail!("run needs --p or --h (use sweep for a grid)"),
        (None, None) => default_p_grid(),
    };
    if single && p_grid.len() > 1 {
        bail!("run takes a single p value; use sweep for a grid");
    }
    Ok(ExperimentConfig {
        mode: match args.mode {
            ModeArg::Classic => Mode::Classic,
            ModeArg::Doubletree => Mode::Doubletree,
        },
        p_grid,
        h_override: args.h,
        stopset: match args.stopset {
            StopSetArg::Exact => StopSetChoice::Exact,
            StopSetArg::Bloom => StopSetChoice::Bloom {
                bits_per_element: args.bloom_bits_per_elem,
                k: args.bloom_k,
            },
        },
        bloom_expected_n: args.bloom_expected_n,
        monitor_order_seed: args.seed_order,
        hash_seed: args.seed_hash,
        cost: cost(args.probes_per_hop),
        max_hops: args.max_hops,
        jobs: args.jobs,
        write_logs: args.write_logs,
    })
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn run(args: &RunArgs, single: bool) -> anyhow::Result<()> {
    let cfg = config(args, single)?;
    let (set, digest) = load(&args.traces, cfg.max_hops)?;
    let initial = match &args.stopset_in {
        Some(path) => {
            let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            Some(
                GlobalStopSet::deserialize(&bytes)
                    .with_context(|| format!("decoding {}", path.display()))?,
            )
        }
        None => None,
    };
    let exp = run_experiment(&set, &cfg, initial.as_ref())?;
    let manifest = RunManifest {
        traceset_digest: digest,
        config: cfg,
        traces: Some(args.traces.clone()),
        command: command_line(),
    };
    write_experiment(&exp, &args.out, &manifest, args.stopset_out)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn compare(args: &RunArgs) -> anyhow::Result<()> {
    if args.stopset_in.is_some() {
        bail!("compare-stopsets always starts from empty stop sets");
    }
    let mut cfg = config(args, false)?;
    cfg.stopset = StopSetChoice::Bloom {
        bits_per_element: args.bloom_bits_per_elem,
        k: args.bloom_k,
    };
    let (set, digest) = load(&args.traces, cfg.max_hops)?;
    let cmp = compare_stopsets(&set, &cfg)?;
    let manifest = RunManifest {
        traceset_digest: digest,
        config: cfg,
        traces: Some(args.traces.clone()),
        command: command_line(),
    };
    write_comparison(&cmp, &args.out, &manifest)?;
    eprintln!("wrote {}", args.out.join("compare_stopsets.csv").display());
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> anyhow::Result<()> {
    let (set, _) = load(&args.traces, args.max_hops)?;
    let file =
        fs::File::open(&args.log).with_context(|| format!("opening {}", args.log.display()))?;
    let log =
        ProbeLog::read_csv(file).with_context(|| format!("parsing {}", args.log.display()))?;
    let point = analyze_log(&set, &log, cost(args.probes_per_hop), args.max_hops)?;
    write_point(&point, &args.out, false)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn generate(args: &GenerateArgs) -> anyhow::Result<()> {
    let params = TopoParams {
        n_monitors: args.monitors,
        n_destinations: args.destinations,
        n_core: args.core,
        n_stub: args.stubs,
        edge_prob: args.edge_prob,
        dest_response_rate: args.dest_response_rate,
        hop_response_rate: args.hop_response_rate,
        seed: args.seed,
    };
    let split = args.split.map(|s| match s {
        SplitArg::A => Split::A,
        SplitArg::B => Split::B,
    });
    let set = generate_split(&params, split)?;
    // re-parse so the written file honours --max-hops
    let set = TraceSet::parse(&set.to_text(), args.max_hops)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    set.save(&args.out)?;
    eprintln!("wrote {} traces to {}", set.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a, true),
        Command::Sweep(a) => run(a, false),
        Command::CompareStopsets(a) => compare(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
