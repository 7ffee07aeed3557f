use bisim_core::bench::{default_initial, generate, Family, GenSpec};
use bisim_core::reach::Precompute;
use bisim_core::refine::{refine_hash, refine_sort, ProbTable};
use bisim_core::{
    build_quotient, check_stability, find_cycle, gauss_seidel_reach, load_model, oracle_bisimulation, partitions_equal, run_refinement,
    write_model, InitialPartition, Model, Model32, Objective, Partition, ReachQuery, RefinementConfig, SplitBackend, Strategy,
};
use proptest::prelude::*;

fn family() -> impl proptest::strategy::Strategy<Value = Family> {
    prop_oneof![
        Just(Family::RandomMdp),
        Just(Family::LayeredDag),
        Just(Family::CyclicLayered),
        Just(Family::GridDice),
        Just(Family::Chain),
    ]
}

prop_compose! {
    fn small_spec()(family in family(), base in 4usize..25, dup in 1usize..4, seed in any::<u64>(), granularity in prop_oneof![Just(2u32), Just(4), Just(8)]) -> GenSpec {
        GenSpec {
            family,
            num_states: base * dup,
            layers: 3,
            fanout: (1, 2),
            prob_granularity: granularity,
            duplication: dup,
            back_edge_density: 0.3,
            seed,
            ..GenSpec::default()
        }
    }
}

fn refine(model: &Model, strategy: Strategy, backend: SplitBackend, seed: u64) -> (Partition, bisim_core::RunStats) {
    let cfg = RefinementConfig {
        seed,
        ..RefinementConfig::new(strategy, backend)
    };
    run_refinement(model, &default_initial(strategy).build(model), &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn text_round_trip(spec in small_spec()) {
        let m: Model = generate(&spec).unwrap();
        let (tra, lab) = write_model(&m);
        let back: Model = load_model(&tra, &lab, "goal").unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(write_model(&back), (tra, lab));
    }

    #[test]
    fn strategies_match_oracle(spec in small_spec(), seed in any::<u64>()) {
        let m: Model = generate(&spec).unwrap();
        let oracle = oracle_bisimulation(&m, &InitialPartition::TwoBlock.build(&m));
        let acyclic = find_cycle(&m).is_none();
        for strategy in Strategy::ALL {
            if strategy == Strategy::Topological && !acyclic {
                continue;
            }
            for backend in SplitBackend::ALL {
                let (p, stats) = refine(&m, strategy, backend, seed);
                prop_assert!(partitions_equal(&p, &oracle), "{} {}", strategy, backend.name());
                prop_assert!(check_stability(&m, &p).is_stable());
                prop_assert!(stats.stale_skips <= stats.enqueues);
                let n = m.num_states() as f64;
                prop_assert!(stats.spl_avg() <= n.log2() + 1.0 + stats.fallback_count as f64, "SplAvg {}", stats.spl_avg());
                if strategy == Strategy::Topological {
                    prop_assert!(stats.spl_avg() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn runs_are_reproducible(spec in small_spec(), seed in any::<u64>()) {
        let m: Model = generate(&spec).unwrap();
        for strategy in [Strategy::Random, Strategy::SizeHybrid, Strategy::TopologicalCyclic] {
            let (p1, s1) = refine(&m, strategy, SplitBackend::Hash, seed);
            let (p2, s2) = refine(&m, strategy, SplitBackend::Hash, seed);
            prop_assert!(s1.same_counters(&s2));
            prop_assert_eq!(p1.canonical_blocks(), p2.canonical_blocks());
        }
    }

    #[test]
    fn single_refine_backends_agree(spec in small_spec(), pick in any::<prop::sample::Index>()) {
        let m: Model = generate(&spec).unwrap();
        let (stable, _) = refine(&m, Strategy::SizeHeap, SplitBackend::Hash, 0);
        // Refine a coarse partition with one splitter taken from the stable one.
        let mut a = InitialPartition::TwoBlock.build(&m);
        let mut b = a.clone();
        let splitter_state = pick.index(m.num_states());
        let c = a.block_of(splitter_state);
        let oa = refine_sort(&m, &mut a, c);
        let ob = refine_hash(&m, &mut b, c, ProbTable::new(16));
        prop_assert_eq!(oa, ob);
        prop_assert_eq!(a.block_of_state(), b.block_of_state());
        prop_assert!(stable.is_finer_than(&a));
    }

    #[test]
    fn quotient_reach_preserved(spec in small_spec()) {
        let m: Model = generate(&spec).unwrap();
        let (p, _) = refine(&m, Strategy::SizeHeap, SplitBackend::Hash, 0);
        let q = build_quotient(&m, &p).unwrap();
        for objective in Objective::ALL {
            let query = ReachQuery { precompute: Precompute::Qualitative, ..ReachQuery::new(objective, 1e-10) };
            let orig = gauss_seidel_reach(&m, &query).unwrap();
            let quot = gauss_seidel_reach(&q.model, &query).unwrap();
            for (s, &b) in q.block_map.iter().enumerate() {
                prop_assert!((orig.values[s] - quot.values[b]).abs() <= 1e-7);
                prop_assert!((0.0..=1.0).contains(&orig.values[s]));
            }
        }
        let (again, _) = refine(&q.model, Strategy::SizeHeap, SplitBackend::Sort, 0);
        prop_assert_eq!(again.num_blocks(), q.num_states());
    }

    #[test]
    fn f32_agrees_with_f64(spec in small_spec()) {
        let m64: Model = generate(&spec).unwrap();
        let m32: Model32 = generate(&spec).unwrap();
        let cfg = RefinementConfig::default();
        let (p64, _) = run_refinement(&m64, &InitialPartition::TwoBlock.build(&m64), &cfg).unwrap();
        let (p32, _) = run_refinement(&m32, &InitialPartition::TwoBlock.build(&m32), &cfg).unwrap();
        prop_assert!(partitions_equal(&p64, &p32));
    }
}

#[test]
fn max_reach_is_monotone_per_sweep() {
    let m: Model = generate(&GenSpec::new(Family::CyclicLayered, 200, 5)).unwrap();
    let mut previous = vec![0.0; m.num_states()];
    for sweeps in 1..40 {
        let q = ReachQuery {
            max_iters: sweeps,
            epsilon: 1e-300,
            ..ReachQuery::new(Objective::Max, 1e-300)
        };
        let values = match gauss_seidel_reach(&m, &q) {
            Ok(r) => r.values,
            Err(bisim_core::reach::ReachError::NotConverged(r)) => r.values,
            Err(e) => panic!("{e}"),
        };
        for (v, p) in values.iter().zip(&previous) {
            assert!(v >= p && *v <= 1.0);
        }
        previous = values;
    }
}

#[test]
fn generator_output_is_byte_stable() {
    let spec = GenSpec {
        duplication: 5,
        ..GenSpec::new(Family::LayeredDag, 500, 7)
    };
    let a: Model = generate(&spec).unwrap();
    let b: Model = generate(&spec).unwrap();
    assert_eq!(write_model(&a), write_model(&b));
}

#[test]
fn heavily_lumpable_model_shrinks() {
    let spec = GenSpec {
        duplication: 5,
        ..GenSpec::new(Family::LayeredDag, 2000, 11)
    };
    let m: Model = generate(&spec).unwrap();
    let (p, _) = refine(&m, Strategy::SizeHeap, SplitBackend::Hash, 0);
    assert!(p.num_blocks() * 5 <= m.num_states());
}

#[test]
fn grid_symmetry_is_found() {
    let m: Model = generate(&GenSpec::new(Family::GridDice, 25, 0)).unwrap();
    let (p, _) = refine(&m, Strategy::SizeHybrid, SplitBackend::Hash, 0);
    // Mirror images across the diagonal are bisimilar.
    assert_eq!(p.block_of(1), p.block_of(5));
    assert_eq!(p.block_of(3), p.block_of(15));
    assert_ne!(p.block_of(0), p.block_of(24));
}
