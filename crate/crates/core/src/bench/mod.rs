//! Synthetic models and the strategy-comparison harness.

mod gen;
mod report;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{write_model, SparseModel};
use crate::num::Probability;
use crate::ordering::{find_cycle, run_refinement, RefineError, RefinementConfig, Strategy};
use crate::quotient::{build_quotient, QuotientError};
use crate::reach::{gauss_seidel_reach, verify_quotient_reach, ReachQuery};
use crate::refine::{partitions_equal, InitialPartition, Partition, SplitBackend};

pub use gen::{generate, Family, GenError, GenSpec};
pub use report::{ExperimentReport, ExperimentRow};

/// Files and settings that reproduce a strategy disagreement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reproducer {
    pub model: String,
    pub tra: String,
    pub lab: String,
    pub seed: u64,
    pub reference: (Strategy, SplitBackend),
    pub disagreeing: (Strategy, SplitBackend),
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(
        "model `{}`: {}/{} disagrees with {}/{}",
        .0.model, .0.disagreeing.0, .0.disagreeing.1.name(), .0.reference.0, .0.reference.1.name()
    )]
    Disagreement(Box<Reproducer>),
    #[error("model `{model}`: {source}")]
    Refine { model: String, source: RefineError },
    #[error("model `{model}`: {source}")]
    Quotient { model: String, source: QuotientError },
}

/// Options for [`compare_strategies`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    pub seed: u64,
    pub hybrid_c: f64,
    /// Run combinations on the rayon pool.
    pub parallel: bool,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            hybrid_c: 8.0,
            parallel: true,
        }
    }
}

/// Starting partition used for `strategy`: shortest-path layers for
/// topo-cyclic, `{G, S∖G}` otherwise.
pub fn default_initial(strategy: Strategy) -> InitialPartition {
    match strategy {
        Strategy::TopologicalCyclic => InitialPartition::BfsLayers,
        _ => InitialPartition::TwoBlock,
    }
}

struct Run {
    row: ExperimentRow,
    partition: Partition,
    strategy: Strategy,
    backend: SplitBackend,
}

/// Runs every strategy × backend on every model and checks that all final
/// partitions agree. The topological strategy is skipped on cyclic models.
pub fn compare_strategies<P: Probability>(
    models: &[(String, SparseModel<P>)],
    strategies: &[Strategy],
    backends: &[SplitBackend],
    options: &CompareOptions,
) -> Result<ExperimentReport, BenchError> {
    let mut report = ExperimentReport::default();
    for (name, model) in models {
        let cyclic = find_cycle(model).is_some();
        let combos: Vec<(Strategy, SplitBackend)> = strategies
            .iter()
            .filter(|&&s| !(cyclic && s == Strategy::Topological))
            .flat_map(|&s| backends.iter().map(move |&b| (s, b)))
            .collect();
        let job = |&(strategy, backend): &(Strategy, SplitBackend)| -> Result<Run, BenchError> {
            let config = RefinementConfig {
                seed: options.seed,
                hybrid_c: options.hybrid_c,
                ..RefinementConfig::new(strategy, backend)
            };
            let initial = default_initial(strategy).build(model);
            let (partition, stats) = run_refinement(model, &initial, &config).map_err(|source| BenchError::Refine {
                model: name.clone(),
                source,
            })?;
            let quotient = build_quotient(model, &partition).map_err(|source| BenchError::Quotient {
                model: name.clone(),
                source,
            })?;
            Ok(Run {
                row: ExperimentRow::from_stats(name, strategy, backend, &stats, quotient.num_states()),
                partition,
                strategy,
                backend,
            })
        };
        let runs: Vec<Run> = if options.parallel {
            combos.par_iter().map(job).collect::<Result<_, _>>()?
        } else {
            combos.iter().map(job).collect::<Result<_, _>>()?
        };
        if let Some(first) = runs.first() {
            for run in &runs[1..] {
                if !partitions_equal(&first.partition, &run.partition) {
                    let (tra, lab) = write_model(model);
                    return Err(BenchError::Disagreement(Box::new(Reproducer {
                        model: name.clone(),
                        tra,
                        lab,
                        seed: options.seed,
                        reference: (first.strategy, first.backend),
                        disagreeing: (run.strategy, run.backend),
                    })));
                }
            }
        }
        report.rows.extend(runs.into_iter().map(|r| r.row));
    }
    Ok(report)
}

/// Wall times of direct model checking versus minimize-then-check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineTiming {
    pub num_states: usize,
    pub quotient_states: usize,
    pub t_direct_ms: f64,
    pub t_bisim_ms: f64,
    pub t_vi_quotient_ms: f64,
    pub direct_iterations: u64,
    pub quotient_iterations: u64,
    pub max_deviation: f64,
    pub values_agree: bool,
}

fn median(mut v: Vec<Duration>) -> f64 {
    v.sort_unstable();
    v[v.len() / 2].as_secs_f64() * 1e3
}

/// Times value iteration on `model`, refinement, and value iteration on the
/// quotient; each phase reports the median of `repeats` runs. Values must
/// agree within `tolerance`.
pub fn pipeline_timing<P: Probability>(
    model: &SparseModel<P>,
    config: &RefinementConfig,
    query: &ReachQuery,
    tolerance: f64,
    repeats: usize,
) -> Result<PipelineTiming, BenchError> {
    let repeats = repeats.max(1);
    let initial = default_initial(config.strategy).build(model);
    let mut direct = Vec::with_capacity(repeats);
    let mut bisim = Vec::with_capacity(repeats);
    let mut on_quotient = Vec::with_capacity(repeats);
    let mut last = None;
    for _ in 0..repeats {
        let t = Instant::now();
        let direct_result = gauss_seidel_reach(model, query);
        direct.push(t.elapsed());

        let t = Instant::now();
        let (partition, _) = run_refinement(model, &initial, config).map_err(|source| BenchError::Refine {
            model: String::new(),
            source,
        })?;
        let quotient = build_quotient(model, &partition).map_err(|source| BenchError::Quotient {
            model: String::new(),
            source,
        })?;
        bisim.push(t.elapsed());

        let t = Instant::now();
        let quotient_result = gauss_seidel_reach(&quotient.model, query);
        on_quotient.push(t.elapsed());
        last = Some((direct_result, quotient_result, quotient));
    }
    let (direct_result, quotient_result, quotient) = last.expect("at least one repeat");
    let iterations = |r: &Result<_, _>| match r {
        Ok(crate::reach::ReachResult { iterations, .. }) => *iterations,
        Err(crate::reach::ReachError::NotConverged(r)) => r.iterations,
        Err(_) => 0,
    };
    let agreement = verify_quotient_reach(model, &quotient, query.epsilon, tolerance);
    Ok(PipelineTiming {
        num_states: model.num_states(),
        quotient_states: quotient.num_states(),
        t_direct_ms: median(direct),
        t_bisim_ms: median(bisim),
        t_vi_quotient_ms: median(on_quotient),
        direct_iterations: iterations(&direct_result),
        quotient_iterations: iterations(&quotient_result),
        max_deviation: agreement.max_deviation(),
        values_agree: agreement.passed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOUR: [Strategy; 4] = [Strategy::Random, Strategy::TopologicalCyclic, Strategy::SizeHeap, Strategy::SizeHybrid];

    #[test]
    fn one_model_four_strategies() {
        let m: SparseModel<f64> = generate(&GenSpec::new(Family::RandomMdp, 40, 1)).unwrap();
        let report = compare_strategies(&[("r".into(), m)], &FOUR, &[SplitBackend::Hash], &CompareOptions::default()).unwrap();
        assert_eq!(report.rows.len(), 4);
        let blocks = report.rows[0].final_num_blocks;
        assert!(report.rows.iter().all(|r| r.final_num_blocks == blocks));
        for r in &report.rows {
            assert_eq!(r.spl_avg * r.num_states as f64, r.splitter_mass as f64);
        }
    }

    #[test]
    fn topological_skipped_on_cyclic() {
        let m: SparseModel<f64> = generate(&GenSpec::new(Family::RandomMdp, 20, 2)).unwrap();
        let report = compare_strategies(
            &[("r".into(), m)],
            &Strategy::ALL,
            &SplitBackend::ALL,
            &CompareOptions {
                parallel: false,
                ..CompareOptions::default()
            },
        )
        .unwrap();
        assert!(report.rows.iter().all(|r| r.strategy != Strategy::Topological));
        assert_eq!(report.rows.len(), 8);
    }

    #[test]
    fn acyclic_topological_single_use() {
        let m: SparseModel<f64> = generate(&GenSpec::new(Family::LayeredDag, 300, 4)).unwrap();
        let report = compare_strategies(&[("d".into(), m)], &[Strategy::Topological], &SplitBackend::ALL, &CompareOptions::default()).unwrap();
        assert!(report.rows.iter().all(|r| r.spl_avg <= 1.0));
    }

    #[test]
    fn pipeline_on_chain() {
        let m: SparseModel<f64> = generate(&GenSpec::new(Family::Chain, 50, 0)).unwrap();
        let t = pipeline_timing(&m, &RefinementConfig::default(), &ReachQuery::new(crate::reach::Objective::Max, 1e-8), 1e-5, 3).unwrap();
        assert!(t.values_agree);
        assert_eq!(t.quotient_states, 50);
    }

    #[test]
    fn duplication_lumps() {
        let spec = GenSpec {
            duplication: 5,
            ..GenSpec::new(Family::LayeredDag, 1000, 9)
        };
        let m: SparseModel<f64> = generate(&spec).unwrap();
        let t = pipeline_timing(&m, &RefinementConfig::default(), &ReachQuery::new(crate::reach::Objective::Max, 1e-8), 1e-5, 1).unwrap();
        assert!(t.quotient_states * 5 <= m.num_states(), "{}", t.quotient_states);
        assert!(t.values_agree);
    }
}
