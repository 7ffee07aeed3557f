//! Subcommand implementations.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;

use anyhow::anyhow;
use serde::Serialize;

use bisim_core::bench::{compare_strategies, generate, pipeline_timing, BenchError, CompareOptions, GenSpec, PipelineTiming};
use bisim_core::reach::{Convergence, Precompute, ReachError};
use bisim_core::{
    build_quotient, check_stability, gauss_seidel_reach, load_model_with, oracle_bisimulation, partitions_equal, run_refinement,
    write_model_labeled, InitialPartition, LoadOptions, Model, Objective, Partition, Probability, QuotientError, QuotientModel,
    ReachQuery, RefineError, RefinementConfig, RunStats, SparseModel, Stability, StateId, Strategy, TableConfig,
};

use crate::output::{
    with_suffix, write_files_atomically, CliError, CliResult, StatsJson, WithCode, EXIT_INVARIANT, EXIT_MISMATCH, EXIT_NOT_CONVERGED,
    EXIT_PARSE, EXIT_USAGE,
};
use crate::{BenchArgs, CheckArgs, GenArgs, MinimizeArgs, ModelArgs, Precision, RefineArgs, VerifyArgs};

/// Tolerance for comparing reachability values of a model and its quotient.
const REACH_TOLERANCE: f64 = 1e-6;

macro_rules! by_precision {
    ($precision:expr, $f:ident($($arg:expr),*)) => {
        match $precision {
            Precision::F64 => $f::<f64>($($arg),*),
            Precision::F32 => $f::<f32>($($arg),*),
        }
    };
}

pub fn minimize(args: &MinimizeArgs) -> CliResult {
    by_precision!(args.model.precision, minimize_as(args))
}

pub fn check(args: &CheckArgs) -> CliResult {
    by_precision!(args.model.precision, check_as(args))
}

pub fn verify(args: &VerifyArgs) -> CliResult {
    by_precision!(args.model.precision, verify_as(args))
}

fn load<P: Probability>(args: &ModelArgs) -> CliResult<SparseModel<P>> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| CliError::new(EXIT_PARSE, anyhow!("cannot read {}: {e}", p.display())));
    let tra = read(&args.tra)?;
    let lab = read(&args.lab)?;
    let loaded = load_model_with::<P>(&tra, &lab, &args.goal_label, &LoadOptions { strict: args.strict })
        .map_err(|e| CliError::new(EXIT_PARSE, anyhow!("{}: {e}", args.tra.display())))?;
    Ok(loaded.model)
}

impl RefineArgs {
    fn config(&self) -> CliResult<RefinementConfig> {
        if self.hash_size == 0 {
            return Err(CliError::new(EXIT_USAGE, anyhow!("--hash-size must be positive")));
        }
        if !(self.hybrid_c.is_finite() && self.hybrid_c >= 1.0) {
            return Err(CliError::new(EXIT_USAGE, anyhow!("--hybrid-c must be at least 1")));
        }
        Ok(RefinementConfig {
            strategy: self.ordering,
            backend: self.split,
            table: TableConfig {
                size: self.hash_size,
                ..TableConfig::default()
            },
            seed: self.seed,
            hybrid_c: self.hybrid_c,
            enqueue_all_children: self.enqueue_all_children,
        })
    }

    /// Topo-cyclic always starts from goal-distance layers.
    fn initial(&self) -> InitialPartition {
        match (self.ordering, self.initial) {
            (Strategy::TopologicalCyclic, Some(InitialPartition::TwoBlock)) => {
                log::warn!("--initial two-block is ignored by the topo-cyclic ordering");
                InitialPartition::BfsLayers
            }
            (Strategy::TopologicalCyclic, _) => InitialPartition::BfsLayers,
            (_, given) => given.unwrap_or(InitialPartition::TwoBlock),
        }
    }
}

fn refine_error(e: RefineError) -> CliError {
    let code = match e {
        RefineError::CyclicModel(_) => EXIT_USAGE,
        RefineError::SizeMismatch { .. } => EXIT_INVARIANT,
    };
    CliError::new(code, e)
}

fn quotient_error(e: QuotientError) -> CliError {
    CliError::new(EXIT_INVARIANT, anyhow!("internal invariant violated: {e}"))
}

fn refine<P: Probability>(model: &SparseModel<P>, args: &RefineArgs) -> CliResult<(Partition, RunStats)> {
    let config = args.config()?;
    let initial = args.initial().build(model);
    run_refinement(model, &initial, &config).map_err(refine_error)
}

fn run_minimize<P: Probability>(model: &SparseModel<P>, args: &RefineArgs) -> CliResult<(QuotientModel<P>, RunStats)> {
    let (partition, stats) = refine(model, args)?;
    let quotient = build_quotient(model, &partition).map_err(quotient_error)?;
    Ok((quotient, stats))
}

fn minimize_as<P: Probability>(args: &MinimizeArgs) -> CliResult {
    let model = load::<P>(&args.model)?;
    let (quotient, stats) = run_minimize(&model, &args.refine)?;
    let (tra, lab) = write_model_labeled(&quotient.model, &args.model.goal_label);
    let map = quotient.block_map_text();
    let stats_json = StatsJson::new(&model, &quotient, &stats);
    let mut json = serde_json::to_string_pretty(&stats_json).expect("stats serialize");
    json.push('\n');
    write_files_atomically(&[
        (with_suffix(&args.out, ".tra"), tra.as_bytes()),
        (with_suffix(&args.out, ".lab"), lab.as_bytes()),
        (with_suffix(&args.out, ".map"), map.as_bytes()),
        (with_suffix(&args.out, ".stats.json"), json.as_bytes()),
    ])
    .code(EXIT_USAGE)?;
    if args.stats_json {
        print!("{json}");
    } else {
        println!(
            "{} -> {} states ({} refine calls, SplAvg {:.3}, {:.1} ms)",
            model.num_states(),
            quotient.num_states(),
            stats.refine_calls,
            stats.spl_avg(),
            stats_json.wall_ms
        );
    }
    Ok(())
}

fn check_as<P: Probability>(args: &CheckArgs) -> CliResult {
    if !(args.epsilon > 0.0 && args.epsilon.is_finite()) {
        return Err(CliError::new(EXIT_USAGE, anyhow!("--epsilon must be positive")));
    }
    let model = load::<P>(&args.model)?;
    let query = ReachQuery {
        objective: args.objective,
        epsilon: args.epsilon,
        max_iters: args.max_iters,
        precompute: if args.qualitative { Precompute::Qualitative } else { Precompute::None },
        convergence: if args.relative { Convergence::Relative } else { Convergence::Absolute },
    };
    let (target, state) = if args.via_bisim {
        let (quotient, stats) = run_minimize(&model, &args.refine)?;
        log::info!(
            "quotient has {} of {} states after {} refine calls",
            quotient.num_states(),
            model.num_states(),
            stats.refine_calls
        );
        let state = quotient.block_map[model.initial()];
        (quotient.model, state)
    } else {
        let state = model.initial();
        (model, state)
    };
    match gauss_seidel_reach(&target, &query) {
        Ok(result) => {
            log::info!("converged after {} sweeps", result.iterations);
            println!("{:?}", result.values[state]);
            Ok(())
        }
        Err(ReachError::NotConverged(partial)) => {
            println!("{:?}", partial.values[state]);
            Err(CliError::new(
                EXIT_NOT_CONVERGED,
                anyhow!("value iteration did not converge within {} sweeps; printed value is the last iterate", partial.iterations),
            ))
        }
        Err(e) => Err(CliError::new(EXIT_USAGE, e)),
    }
}

/// Two states grouped by one partition and separated by the other.
fn partition_witness(a: &Partition, b: &Partition) -> Option<(StateId, StateId)> {
    let one_way = |x: &Partition, y: &Partition| {
        let mut seen: HashMap<usize, (usize, StateId)> = HashMap::new();
        for s in 0..x.num_states() {
            let (bx, by) = (x.block_of(s), y.block_of(s));
            match seen.get(&bx) {
                Some(&(other, t)) if other != by => return Some((t, s)),
                Some(_) => {}
                None => {
                    seen.insert(bx, (by, s));
                }
            }
        }
        None
    };
    one_way(a, b).or_else(|| one_way(b, a))
}

#[derive(Serialize)]
struct VerifyReproducer<'a> {
    reason: String,
    witness: Option<(StateId, StateId)>,
    goal_label: &'a str,
    ordering: Strategy,
    split: bisim_core::SplitBackend,
    initial: &'static str,
    seed: u64,
    hash_size: usize,
    hybrid_c: f64,
    enqueue_all_children: bool,
    inject_fault: bool,
    command: String,
}

fn verify_as<P: Probability>(args: &VerifyArgs) -> CliResult {
    let model = load::<P>(&args.model)?;
    let (mut partition, stats) = refine(&model, &args.refine)?;
    if args.inject_fault && partition.num_blocks() > 1 {
        // Merge the blocks of states 0 and of the first state outside them.
        let labels = partition.block_of_state();
        let (b0, other) = (labels[0], labels.iter().copied().find(|&b| b != labels[0]).expect("two blocks"));
        let merged: Vec<usize> = labels.iter().map(|&b| if b == other { b0 } else { b }).collect();
        partition = Partition::from_labels(&merged);
    }
    let reference = oracle_bisimulation(&model, &InitialPartition::TwoBlock.build(&model));

    let failure = if !partitions_equal(&partition, &reference) {
        Some((
            format!(
                "{} blocks from {}/{} but {} in the coarsest bisimulation",
                partition.num_blocks(),
                args.refine.ordering,
                args.refine.split.name(),
                reference.num_blocks()
            ),
            partition_witness(&partition, &reference),
        ))
    } else if let Stability::Witness { state_s, state_t, .. } = check_stability(&model, &partition) {
        Some(("result is not stable".to_string(), Some((state_s, state_t))))
    } else {
        let quotient = build_quotient(&model, &partition).map_err(quotient_error)?;
        let query = ReachQuery {
            precompute: Precompute::Qualitative,
            ..ReachQuery::new(Objective::Max, 1e-10)
        };
        let agreement = bisim_core::reach::verify_quotient_reach_with(&model, &quotient, &query, REACH_TOLERANCE);
        (!agreement.passed()).then(|| {
            let worst = agreement
                .per_objective
                .iter()
                .max_by(|a, b| a.max_deviation.total_cmp(&b.max_deviation))
                .and_then(|d| d.worst_state);
            (
                format!("quotient reachability deviates by {:e}", agreement.max_deviation()),
                worst.map(|s| (s, s)),
            )
        })
    };

    let Some((reason, witness)) = failure else {
        println!(
            "ok: {} states, {} blocks, {} refine calls, SplAvg {:.3}",
            model.num_states(),
            partition.num_blocks(),
            stats.refine_calls,
            stats.spl_avg()
        );
        return Ok(());
    };

    let (tra, lab) = write_model_labeled(&model, &args.model.goal_label);
    let repro = VerifyReproducer {
        reason: reason.clone(),
        witness,
        goal_label: &args.model.goal_label,
        ordering: args.refine.ordering,
        split: args.refine.split,
        initial: match args.refine.initial() {
            InitialPartition::TwoBlock => "two-block",
            InitialPartition::BfsLayers => "bfs-layers",
        },
        seed: args.refine.seed,
        hash_size: args.refine.hash_size,
        hybrid_c: args.refine.hybrid_c,
        enqueue_all_children: args.refine.enqueue_all_children,
        inject_fault: args.inject_fault,
        command: std::env::args().collect::<Vec<_>>().join(" "),
    };
    let json = serde_json::to_string_pretty(&repro).expect("reproducer serialize");
    std::fs::create_dir_all(&args.bundle).code(EXIT_USAGE)?;
    write_files_atomically(&[
        (args.bundle.join("model.tra"), tra.as_bytes()),
        (args.bundle.join("model.lab"), lab.as_bytes()),
        (args.bundle.join("reproducer.json"), json.as_bytes()),
    ])
    .code(EXIT_USAGE)?;
    let witness = witness.map(|(s, t)| format!(" (witness states {s} and {t})")).unwrap_or_default();
    Err(CliError::new(
        EXIT_MISMATCH,
        anyhow!("verification failed: {reason}{witness}; reproducer written to {}", args.bundle.display()),
    ))
}

pub fn gen(args: &GenArgs) -> CliResult {
    let spec = GenSpec {
        family: args.family,
        num_states: args.states,
        actions_per_state: args.actions,
        fanout: args.fanout,
        prob_granularity: args.granularity,
        seed: args.seed,
        layers: args.layers,
        back_edge_density: args.back_edges,
        duplication: args.duplication,
        goal_fraction: args.goal_fraction,
    };
    let model: Model = generate(&spec).code(EXIT_USAGE)?;
    let (tra, lab) = write_model_labeled(&model, "goal");
    write_files_atomically(&[
        (with_suffix(&args.out, ".tra"), tra.as_bytes()),
        (with_suffix(&args.out, ".lab"), lab.as_bytes()),
    ])
    .code(EXIT_USAGE)?;
    println!(
        "{} states, {} choices, {} transitions",
        model.num_states(),
        model.num_actions(),
        model.num_transitions()
    );
    Ok(())
}

#[derive(Serialize)]
struct PipelineRow<'a> {
    model: &'a str,
    #[serde(flatten)]
    timing: PipelineTiming,
}

pub fn bench(args: &BenchArgs) -> CliResult {
    let models = (0..args.count)
        .map(|i| {
            let spec = GenSpec {
                family: args.family,
                num_states: args.states,
                seed: args.seed + i,
                duplication: args.duplication,
                layers: args.layers,
                ..GenSpec::default()
            };
            let model: Model = generate(&spec).code(EXIT_USAGE)?;
            Ok((format!("{}-{}-s{}", args.family, args.states, spec.seed), model))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let options = CompareOptions {
        seed: args.seed,
        parallel: !args.sequential,
        ..CompareOptions::default()
    };
    let report = compare_strategies(&models, &args.orderings, &args.splits, &options).map_err(|e| match e {
        BenchError::Disagreement(repro) => {
            let json = serde_json::to_string_pretty(&repro).expect("reproducer serialize");
            eprintln!("{json}");
            CliError::new(EXIT_MISMATCH, BenchError::Disagreement(repro))
        }
        BenchError::Refine { .. } => CliError::new(EXIT_USAGE, e),
        BenchError::Quotient { .. } => CliError::new(EXIT_INVARIANT, e),
    })?;

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    report.write_json_lines(&mut out).code(EXIT_USAGE)?;
    if let Some(path) = &args.csv {
        let mut buf = Vec::new();
        report.write_csv(&mut buf).code(EXIT_USAGE)?;
        write_files_atomically(&[(path.clone(), &buf)]).code(EXIT_USAGE)?;
    }
    if args.pipeline {
        let query = ReachQuery {
            precompute: Precompute::Qualitative,
            ..ReachQuery::new(Objective::Max, 1e-8)
        };
        for (name, model) in &models {
            let timing = pipeline_timing(model, &RefinementConfig::default(), &query, REACH_TOLERANCE, 3).map_err(|e| CliError::new(EXIT_INVARIANT, e))?;
            serde_json::to_writer(&mut out, &PipelineRow { model: name, timing }).code(EXIT_USAGE)?;
            writeln!(out).code(EXIT_USAGE)?;
        }
    }
    for strategy in &args.orderings {
        if let Some(mean) = report.mean_spl_avg(*strategy) {
            eprintln!("{strategy}: mean SplAvg {mean:.3}");
        }
    }
    Ok(())
}
