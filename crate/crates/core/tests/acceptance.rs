//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Runs without the libtest harness so the lines appear in plain `cargo test`
//! output. `cargo test --test acceptance -- <filter>` runs the criteria whose
//! name contains `<filter>`.

use std::time::{Duration, Instant};

use bisim_core::bench::{default_initial, generate, Family, GenSpec};
use bisim_core::reach::{verify_quotient_reach_with, Precompute};
use bisim_core::refine::{hash_probability, InitialPartition};
use bisim_core::{
    build_quotient, check_stability, find_cycle, oracle_bisimulation, partitions_equal, run_refinement, write_model, Model, Objective,
    ReachQuery, Partition, RefinementConfig, SplitBackend, Strategy,
};

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict { ok, detail: detail.into() }
}

/// Seeded random MDPs: 10–50 states, 1–3 actions, fanout 1–4. Every other
/// instance duplicates its states so that it has nontrivial merges.
fn oracle_suite(count: u64) -> Vec<Model> {
    (0..count)
        .map(|seed| {
            let duplication = if seed % 2 == 0 { 2 } else { 1 };
            let base = 5 + (seed as usize * 7) % 21;
            generate(&GenSpec {
                family: Family::RandomMdp,
                num_states: base * duplication,
                actions_per_state: (1, 3),
                fanout: (1, 4),
                prob_granularity: if seed % 3 == 0 { 4 } else { 8 },
                seed,
                duplication,
                goal_fraction: 0.15,
                ..GenSpec::default()
            })
            .expect("valid spec")
        })
        .collect()
}

fn config(strategy: Strategy, backend: SplitBackend, seed: u64) -> RefinementConfig {
    RefinementConfig {
        seed,
        ..RefinementConfig::new(strategy, backend)
    }
}

fn refine(model: &Model, cfg: &RefinementConfig) -> (Partition, bisim_core::RunStats) {
    let initial = default_initial(cfg.strategy).build(model);
    run_refinement(model, &initial, cfg).expect("refinement")
}

fn hash_exactness() -> Verdict {
    let t = Instant::now();
    let h1 = hash_probability(0.00013760908);
    let h0 = hash_probability(0.0);
    let elapsed = t.elapsed();
    verdict(
        h1 == 1376 && h0 == 0 && elapsed < Duration::from_millis(1),
        format!("h(0.00013760908)={h1}, h(0)={h0}, {elapsed:?}"),
    )
}

fn oracle_equivalence() -> Verdict {
    let t = Instant::now();
    let models = oracle_suite(1000);
    let mut runs = 0;
    let mut topo_runs = 0;
    let mut failures = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let oracle = oracle_bisimulation(m, &InitialPartition::TwoBlock.build(m));
        let acyclic = find_cycle(m).is_none();
        for strategy in Strategy::ALL {
            if strategy == Strategy::Topological && !acyclic {
                continue;
            }
            for backend in SplitBackend::ALL {
                let (p, _) = refine(m, &config(strategy, backend, i as u64));
                runs += 1;
                topo_runs += usize::from(strategy == Strategy::Topological);
                if !partitions_equal(&p, &oracle) || !check_stability(m, &p).is_stable() {
                    failures.push(format!("model {i} {strategy}/{}", backend.name()));
                }
            }
        }
    }
    // Topological coverage on small acyclic instances of the same size range.
    for seed in 0..250u64 {
        let m: Model = generate(&GenSpec {
            family: Family::LayeredDag,
            num_states: 10 + (seed as usize % 41),
            layers: 4,
            fanout: (1, 4),
            prob_granularity: 4,
            seed,
            ..GenSpec::default()
        })
        .expect("valid spec");
        let oracle = oracle_bisimulation(&m, &InitialPartition::TwoBlock.build(&m));
        for backend in SplitBackend::ALL {
            let (p, _) = refine(&m, &config(Strategy::Topological, backend, 0));
            runs += 1;
            topo_runs += 1;
            if !partitions_equal(&p, &oracle) || !check_stability(&m, &p).is_stable() {
                failures.push(format!("dag {seed} topo/{}", backend.name()));
            }
        }
    }
    let elapsed = t.elapsed();
    verdict(
        failures.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "{} models, {runs} runs ({topo_runs} topological), {} mismatches {:?}, {elapsed:.1?}",
            models.len(),
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn backend_equivalence() -> Verdict {
    let models = oracle_suite(1000);
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (i, m) in models.iter().enumerate() {
        for strategy in [Strategy::Random, Strategy::TopologicalCyclic, Strategy::SizeHeap, Strategy::SizeHybrid] {
            let outputs: Vec<_> = SplitBackend::ALL
                .into_iter()
                .map(|backend| {
                    let (p, _) = refine(m, &config(strategy, backend, i as u64));
                    let q = build_quotient(m, &p).expect("stable partition");
                    (p.canonical_blocks(), write_model(&q.model), q.block_map_text())
                })
                .collect();
            compared += 1;
            if outputs[0] != outputs[1] {
                mismatches.push(format!("model {i} {strategy}"));
            }
        }
    }
    verdict(
        mismatches.is_empty(),
        format!("{compared} sort/hash pairs, partitions and quotient files identical except {mismatches:?}"),
    )
}

fn acyclic_topological_bound() -> Verdict {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut oracle_checked = 0;
    for seed in 0..100u64 {
        let spec = GenSpec {
            family: Family::LayeredDag,
            num_states: 1000,
            layers: 20,
            actions_per_state: (1, 3),
            fanout: (1, 4),
            prob_granularity: 8,
            duplication: if seed % 2 == 0 { 4 } else { 1 },
            seed,
            ..GenSpec::default()
        };
        let m: Model = generate(&spec).expect("valid spec");
        let (p, stats) = refine(&m, &config(Strategy::Topological, SplitBackend::Hash, 0));
        worst = worst.max(stats.spl_avg());
        if stats.spl_avg() > 1.0 || !check_stability(&m, &p).is_stable() {
            failures.push(seed);
        }
        let small: Model = generate(&GenSpec {
            num_states: 200,
            layers: 10,
            ..spec
        })
        .expect("valid spec");
        let (ps, ss) = refine(&small, &config(Strategy::Topological, SplitBackend::Hash, 0));
        oracle_checked += 1;
        if ss.spl_avg() > 1.0 || !partitions_equal(&ps, &oracle_bisimulation(&small, &InitialPartition::TwoBlock.build(&small))) {
            failures.push(1000 + seed);
        }
    }
    let elapsed = t.elapsed();
    verdict(
        failures.is_empty() && elapsed < Duration::from_secs(30),
        format!("100 DAGs of 1000 states, max SplAvg {worst:.4}, {oracle_checked} oracle checks at 200 states, failures {failures:?}, {elapsed:.1?}"),
    )
}

fn size_trend() -> Verdict {
    let t = Instant::now();
    let mut size_sum = 0.0;
    let mut random_sum = 0.0;
    let mut wins = 0;
    let n = 100;
    for seed in 0..n {
        let m: Model = generate(&GenSpec {
            family: Family::CyclicLayered,
            num_states: 10_000,
            layers: 50,
            actions_per_state: (1, 2),
            fanout: (1, 4),
            prob_granularity: 8,
            back_edge_density: 0.05,
            duplication: 2,
            seed,
            ..GenSpec::default()
        })
        .expect("valid spec");
        let (_, size) = refine(&m, &config(Strategy::SizeHeap, SplitBackend::Hash, seed));
        let (_, random) = refine(&m, &config(Strategy::Random, SplitBackend::Hash, seed));
        size_sum += size.spl_avg();
        random_sum += random.spl_avg();
        wins += usize::from(size.spl_avg() < random.spl_avg());
    }
    let elapsed = t.elapsed();
    let (size_mean, random_mean) = (size_sum / n as f64, random_sum / n as f64);
    verdict(
        size_mean < random_mean && wins * 100 >= 80 * n as usize && elapsed < Duration::from_secs(300),
        format!("mean SplAvg size {size_mean:.3} vs random {random_mean:.3}, size lower on {wins}/{n}, {elapsed:.1?}"),
    )
}

fn reachability_preservation() -> Verdict {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let query = ReachQuery {
        precompute: Precompute::Qualitative,
        ..ReachQuery::new(Objective::Max, 1e-8)
    };
    for seed in 0..200u64 {
        let family = if seed % 4 == 3 { Family::CyclicLayered } else { Family::RandomMdp };
        let m: Model = generate(&GenSpec {
            family,
            num_states: 60,
            layers: 6,
            duplication: if seed % 2 == 0 { 3 } else { 1 },
            prob_granularity: 8,
            goal_fraction: 0.1,
            seed: 10_000 + seed,
            ..GenSpec::default()
        })
        .expect("valid spec");
        let (p, _) = refine(&m, &config(Strategy::SizeHeap, SplitBackend::Hash, 0));
        let q = build_quotient(&m, &p).expect("stable partition");
        let report = verify_quotient_reach_with(&m, &q, &query, 1e-5);
        worst = worst.max(report.max_deviation());
        if !report.passed() {
            failures.push(seed);
        }
    }
    let elapsed = t.elapsed();
    verdict(
        failures.is_empty() && elapsed < Duration::from_secs(120),
        format!("200 models, max |orig - quotient| {worst:.2e} (tolerance 1e-5), failures {failures:?}, {elapsed:.1?}"),
    )
}

fn quotient_idempotence() -> Verdict {
    let mut failures = Vec::new();
    let models = oracle_suite(1000);
    for (i, m) in models.iter().enumerate() {
        for strategy in [Strategy::SizeHeap, Strategy::Random, Strategy::TopologicalCyclic] {
            let (p, _) = refine(m, &config(strategy, SplitBackend::Hash, 0));
            let q = build_quotient(m, &p).expect("stable partition");
            let (again, _) = refine(&q.model, &config(strategy, SplitBackend::Hash, 0));
            if again.num_blocks() != q.num_states() {
                failures.push(format!("model {i} {strategy}"));
            }
        }
    }
    verdict(failures.is_empty(), format!("3000 quotients re-minimized, non-identity: {failures:?}"))
}

fn performance_smoke() -> Verdict {
    let m: Model = generate(&GenSpec {
        family: Family::RandomMdp,
        num_states: 100_000,
        actions_per_state: (1, 1),
        fanout: (5, 5),
        prob_granularity: 16,
        goal_fraction: 0.01,
        seed: 1,
        ..GenSpec::default()
    })
    .expect("valid spec");
    let t = Instant::now();
    let (p, stats) = refine(&m, &config(Strategy::SizeHeap, SplitBackend::Hash, 0));
    let q = build_quotient(&m, &p).expect("stable partition");
    let elapsed = t.elapsed();

    let mut zero = 0;
    let mut total = 0;
    for (i, model) in oracle_suite(1000).iter().enumerate() {
        for strategy in [Strategy::Random, Strategy::TopologicalCyclic, Strategy::SizeHeap, Strategy::SizeHybrid] {
            let (_, s) = refine(model, &config(strategy, SplitBackend::Hash, i as u64));
            total += 1;
            zero += usize::from(s.fallback_count == 0);
        }
    }
    verdict(
        elapsed < Duration::from_secs(10) && zero * 100 >= 95 * total,
        format!(
            "{} states / {} transitions minimized to {} in {elapsed:.2?} (fallbacks {}); fallback-free runs {zero}/{total}",
            m.num_states(),
            m.num_transitions(),
            q.num_states(),
            stats.fallback_count
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("hash-function exactness", hash_exactness),
        ("oracle equivalence", oracle_equivalence),
        ("backend equivalence", backend_equivalence),
        ("acyclic topological bound", acyclic_topological_bound),
        ("size-ordering trend", size_trend),
        ("reachability preservation", reachability_preservation),
        ("quotient idempotence", quotient_idempotence),
        ("performance smoke", performance_smoke),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let v = check();
        println!("{} {name}: {}", if v.ok { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.ok);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
