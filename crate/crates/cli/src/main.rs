//! `bisim`: minimize, model-check and benchmark explicit MDPs.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bisim_core::bench::Family;
use bisim_core::refine::{InitialPartition, SplitBackend};
use bisim_core::{Objective, Strategy};

#[derive(Debug, Parser)]
#[command(name = "bisim", version, about = "Probabilistic bisimulation minimization for MDPs and DTMCs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimize a model and write its quotient.
    Minimize(MinimizeArgs),
    /// Compute the reachability probability of the initial state.
    Check(CheckArgs),
    /// Compare a strategy against the reference fixpoint.
    Verify(VerifyArgs),
    /// Write a synthetic model.
    Gen(GenArgs),
    /// Compare strategies on generated models.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F64,
    F32,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Transition file (`.tra`).
    tra: PathBuf,
    /// Label file (`.lab`).
    lab: PathBuf,
    /// Label marking goal states.
    #[arg(long, default_value = "goal")]
    goal_label: String,
    /// Reject states without outgoing transitions instead of self-looping them.
    #[arg(long)]
    strict: bool,
    /// Scalar type used for probabilities.
    #[arg(long, value_enum, default_value = "f64")]
    precision: Precision,
}

#[derive(Debug, Args)]
struct RefineArgs {
    /// Splitter ordering: random, topo, topo-cyclic, size, size-hybrid.
    #[arg(long, default_value = "size")]
    ordering: Strategy,
    /// Grouping backend: sort or hash.
    #[arg(long, default_value = "hash")]
    split: SplitBackend,
    /// Initial partition: two-block (default) or bfs-layers; topo-cyclic always uses bfs-layers.
    #[arg(long)]
    initial: Option<InitialPartition>,
    /// Seed for the random ordering.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bucket count of the probability hash table.
    #[arg(long, default_value_t = bisim_core::refine::DEFAULT_TABLE_SIZE)]
    hash_size: usize,
    /// Constant `c` of the size-hybrid thresholds.
    #[arg(long, default_value_t = 8.0)]
    hybrid_c: f64,
    /// Enqueue every sub-block after a split, including the largest.
    #[arg(long)]
    enqueue_all_children: bool,
}

#[derive(Debug, Args)]
struct MinimizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    refine: RefineArgs,
    /// Output prefix: writes `<out>.tra`, `<out>.lab`, `<out>.map` and `<out>.stats.json`.
    #[arg(short, long)]
    out: PathBuf,
    /// Print the statistics JSON to stdout instead of a summary.
    #[arg(long)]
    stats_json: bool,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    refine: RefineArgs,
    #[arg(long, default_value = "max")]
    objective: Objective,
    /// Convergence threshold on the per-sweep change.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: u64,
    /// Measure the change relative to the new value.
    #[arg(long)]
    relative: bool,
    /// Pin probability-0 and probability-1 states by graph analysis first.
    #[arg(long)]
    qualitative: bool,
    /// Minimize first and solve the quotient.
    #[arg(long)]
    via_bisim: bool,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    refine: RefineArgs,
    /// Directory receiving the reproducer on mismatch.
    #[arg(long, default_value = "bisim-reproducer")]
    bundle: PathBuf,
    /// Merge two result blocks before comparing (exercises the failure path).
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// chain, layered-dag, cyclic-layered, random-mdp or grid-dice.
    #[arg(long, default_value = "random-mdp")]
    family: Family,
    #[arg(long, default_value_t = 100)]
    states: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Actions per state as `min,max`.
    #[arg(long, default_value = "1,3", value_parser = parse_range)]
    actions: (usize, usize),
    /// Successors per action as `min,max`.
    #[arg(long, default_value = "1,4", value_parser = parse_range)]
    fanout: (usize, usize),
    /// Probability denominator (power of two).
    #[arg(long, default_value_t = 8)]
    granularity: u32,
    #[arg(long, default_value_t = 10)]
    layers: usize,
    /// Chance of a back-edge per action (cyclic-layered).
    #[arg(long, default_value_t = 0.1)]
    back_edges: f64,
    /// Copies of every state; copies are bisimilar.
    #[arg(long, default_value_t = 1)]
    duplication: usize,
    /// Fraction of goal states (random-mdp).
    #[arg(long, default_value_t = 0.1)]
    goal_fraction: f64,
    /// Output prefix: writes `<out>.tra` and `<out>.lab`.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value = "layered-dag")]
    family: Family,
    #[arg(long, default_value_t = 1000)]
    states: usize,
    /// Number of generated models.
    #[arg(long, default_value_t = 10)]
    count: u64,
    /// Seed of the first model; later models use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    duplication: usize,
    #[arg(long, default_value_t = 10)]
    layers: usize,
    /// Comma-separated orderings.
    #[arg(long, value_delimiter = ',', default_value = "random,topo,topo-cyclic,size,size-hybrid")]
    orderings: Vec<Strategy>,
    /// Comma-separated backends.
    #[arg(long, value_delimiter = ',', default_value = "sort,hash")]
    splits: Vec<SplitBackend>,
    /// Write rows as CSV to this file in addition to JSON lines on stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also report direct versus minimize-then-check timings per model.
    #[arg(long)]
    pipeline: bool,
    /// Run combinations on one thread.
    #[arg(long)]
    sequential: bool,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').unwrap_or((s, s));
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(output::EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Minimize(a) => commands::minimize(&a),
        Command::Check(a) => commands::check(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Gen(a) => commands::gen(&a),
        Command::Bench(a) => commands::bench(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
